"""Dynamic spectral attention: DCT multi-spectrum channel attention with
learnable Gumbel-Softmax frequency switches, plus a toy detect + restore
network and synthetic weather degradations to exercise it."""
from spectradet.kernels import BACKEND

__version__ = "0.1.0"
