"""Toy dual-branch detection + restoration network."""
from spectradet.unidet.losses import (
    LossReport,
    LossWeights,
    TrainingAbort,
    contrastive_loss,
    detection_loss,
    restoration_loss,
    total_loss,
)
from spectradet.unidet.metrics import APResult, Detection, average_precision, decode, nms
from spectradet.unidet.model import ForwardOutput, ModelConfig, ToyModel, forward
from spectradet.unidet.train import (
    Sample,
    TrainConfig,
    TrainingDiverged,
    cosine_lr,
    count_active_switches,
    evaluate_ap,
    evaluate_losses,
    expected_active_switches,
    make_dataset,
    train,
)
