"""Command-line interface: ``spectradet <command> [options]``.

Commands: analyze, degrade, gradcheck, train, eval, ablate.  Options may
also come from a flat ``key = value`` file given with ``--config``; flags on
the command line override it.  Exit codes: 0 success, 1 usage error, 2 I/O
error, 3 numerical failure.
"""
import argparse
import csv
import logging
import os
import shutil
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from spectradet import __version__
from spectradet import degrade as D
from spectradet.imageio import FormatError, read_keyvalue, read_ppm, write_keyvalue, write_ppm
from spectradet.plot import bar_plot, line_plot
from spectradet.spectral import dct2_forward, radial_band_index, spectral_energy

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3
LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}

log = logging.getLogger("spectradet")


class UsageError(Exception):
    pass


class NumericalFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _kinds(text):
    kinds = tuple(k.strip() for k in text.split(",") if k.strip())
    bad = [k for k in kinds if k not in D.KINDS]
    if not kinds or bad:
        raise argparse.ArgumentTypeError(f"kinds must be drawn from {', '.join(D.KINDS)}")
    return kinds


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _airlight(text):
    vals = [float(v) for v in text.split(",")]
    if len(vals) not in (1, 3):
        raise argparse.ArgumentTypeError("airlight takes one gray value or three comma-separated values")
    return tuple(vals * 3) if len(vals) == 1 else tuple(vals)


def _training_options(p, bench_defaults):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="run")
    p.add_argument("--kind", type=_kinds, default=("fog",), help="comma-separated degradation kinds")
    p.add_argument("--scenes", type=_positive_int, default=bench_defaults["scenes"])
    p.add_argument("--eval-scenes", type=_positive_int, default=48)
    p.add_argument("--epochs", type=_positive_int, default=15)
    p.add_argument("--batch", type=_positive_int, default=8)
    p.add_argument("--lr", type=float, default=bench_defaults["lr"])
    for k, v in enumerate((0.2, 0.8, 0.1, 0.1), 1):
        p.add_argument(f"--lambda{k}", type=float, default=v)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--segments", type=_positive_int, default=4)
    p.add_argument("--switch-granularity", choices=("channel", "segment"), default="channel")
    p.add_argument("--threads", type=_positive_int, default=1)


def build_parser():
    parser = _Parser(prog="spectradet", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("analyze", help="radial DCT band energies of P6 images")
    p.add_argument("images", nargs="+")
    p.add_argument("--reference", help="clean image; adds a degraded/clean energy-ratio series")
    p.add_argument("--bands", type=_positive_int, default=8)
    p.add_argument("--out", default=".")
    p.add_argument("--config")

    p = sub.add_parser("degrade", help="apply a synthetic degradation to a P6 image")
    p.add_argument("input")
    p.add_argument("--kind", choices=D.KINDS, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--annotation", help="annotation file copied next to the output")
    p.add_argument("--r", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--airlight", type=_airlight)
    p.add_argument("--w", type=float)
    p.add_argument("--rain-count", type=int)
    p.add_argument("--rain-length", type=int)
    p.add_argument("--rain-angle", type=float)
    p.add_argument("--rain-intensity", type=float)
    p.add_argument("--config")

    from spectradet.gradchecks import SCOPES
    p = sub.add_parser("gradcheck", help="run the registered finite-difference gradient checks")
    p.add_argument("scope", nargs="?", default="all", choices=("all",) + SCOPES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config")

    p = sub.add_parser("train", help="train the toy network on seeded synthetic scenes")
    _training_options(p, {"scenes": 200, "lr": 1e-2})
    p.add_argument("--mode", choices=("static", "dynamic"), default="dynamic")
    p.add_argument("--config")

    p = sub.add_parser("eval", help="evaluate a checkpoint on seeded synthetic scenes")
    p.add_argument("checkpoint")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kind", type=_kinds, default=("fog",))
    p.add_argument("--scenes", type=_positive_int, default=48)
    p.add_argument("--out")
    p.add_argument("--threads", type=_positive_int, default=1)
    p.add_argument("--config")

    from spectradet.unidet.ablation import Benchmark
    bench = Benchmark()
    p = sub.add_parser("ablate", help="train with and without frequency switches and compare mAP")
    _training_options(p, {"scenes": bench.train_scenes, "lr": bench.lr})
    p.add_argument("--seeds", type=_positive_int, default=1, help="number of consecutive seeds")
    p.add_argument("--config")
    return parser


def _subparser(parser, command):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices.get(command)
    return None


def _config_argv(parser, argv):
    """Expand ``--config FILE`` into flags placed before the explicit ones."""
    if not argv or argv[0].startswith("-"):
        return argv
    command, rest = argv[0], argv[1:]
    sp = _subparser(parser, command)
    if sp is None:
        return argv
    path = None
    for i, tok in enumerate(rest):
        if tok == "--config" and i + 1 < len(rest):
            path = rest[i + 1]
        elif tok.startswith("--config="):
            path = tok.split("=", 1)[1]
    if path is None:
        return argv
    options = {s for a in sp._actions for s in a.option_strings if s.startswith("--")}
    try:
        entries = read_keyvalue(path)
    except OSError as exc:
        raise FileNotFoundError(f"{path}: cannot read config ({exc.strerror})") from exc
    expanded = []
    for key, value in entries.items():
        flag = "--" + key.replace("_", "-")
        if flag not in options or flag in ("--config", "--help", "--version"):
            raise UsageError(f"{path}: unknown config key {key!r}")
        expanded += [flag, value]
    return [command] + expanded + rest


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------


def band_table(img, bands):
    """Rows of (band, r_lo, r_hi, per-channel energies, total, fraction)."""
    spec = dct2_forward(img)
    H, W = spec.shape[1:]
    per_channel = np.stack([spectral_energy(spec[c], bands) for c in range(spec.shape[0])])
    total = per_channel.sum(axis=0)
    grand = total.sum()
    rmax = float(np.hypot((H - 1) / H, (W - 1) / W))
    rows = []
    for b in range(bands):
        frac = total[b] / grand if grand > 0 else 0.0
        rows.append([b, b * rmax / bands, (b + 1) * rmax / bands, *per_channel[:, b], total[b], frac])
    return rows


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, (int, str)) else repr(float(v)) for v in row])


def cmd_analyze(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reference = read_ppm(args.reference) if args.reference else None
    ref_rows = band_table(reference, args.bands) if reference is not None else None
    header = ["band", "r_lo", "r_hi", "energy_r", "energy_g", "energy_b", "energy", "fraction"]
    labels = [str(b) for b in range(args.bands)]
    for path in args.images:
        img = read_ppm(path)
        rows = band_table(img, args.bands)
        stem = Path(path).stem
        _write_csv(out / f"{stem}_bands.csv", header, rows)
        bar_plot(out / f"{stem}_bands.svg", labels, {"energy fraction": [r[7] for r in rows]},
                 title=f"DCT band energy: {stem}", xlabel="radial band (low to high)",
                 ylabel="fraction of spectral energy")
        print(f"{path}: " + " ".join(f"{r[7]:.4f}" for r in rows))
        if ref_rows is not None:
            if reference.shape != img.shape:
                raise UsageError(f"{path}: shape {img.shape[1:]} differs from reference {reference.shape[1:]}")
            ratio_rows = []
            for r, c in zip(rows, ref_rows):
                ratio = r[6] / c[6] if c[6] > 0 else float("nan")
                ratio_rows.append([r[0], c[6], r[6], ratio])
            _write_csv(out / f"{stem}_ratio.csv", ["band", "clean_energy", "degraded_energy", "ratio"], ratio_rows)
            line_plot(out / f"{stem}_ratio.svg",
                      {"degraded / clean": (list(range(args.bands)), [r[3] for r in ratio_rows])},
                      title=f"Band energy ratio: {stem}", xlabel="radial band (low to high)",
                      ylabel="energy ratio")
    return EXIT_OK


# ---------------------------------------------------------------------------
# degrade
# ---------------------------------------------------------------------------


def resolve_spec(args, rng):
    """Sampled defaults for ``args.kind`` overridden by explicit flags."""
    spec = D.sample_spec(args.kind, rng)
    if args.airlight is not None:
        if any(not 0 <= a <= 1 for a in args.airlight):
            raise D.ParameterError(f"--airlight values must lie in [0, 1], got {args.airlight}")
        spec = replace(spec, airlight=args.airlight)
    if args.beta is not None:
        if not args.beta > 0:
            raise D.ParameterError(f"--beta must be > 0, got {args.beta}")
        spec = replace(spec, beta=args.beta)
    if args.r is not None:
        if not args.r > 0:
            raise D.ParameterError(f"--r must be > 0 (sampled range {D.LOWLIGHT_R}), got {args.r}")
        spec = replace(spec, r=args.r)
    if args.w is not None:
        if not D.SNOW_W[0] <= args.w <= D.SNOW_W[1]:
            raise D.ParameterError(f"--w must lie in [{D.SNOW_W[0]}, {D.SNOW_W[1]}], got {args.w}")
        spec = replace(spec, w=args.w)
    rain_over = {k: getattr(args, f"rain_{k}") for k in ("count", "length", "angle", "intensity")}
    rain_over = {k: v for k, v in rain_over.items() if v is not None}
    if rain_over:
        spec = replace(spec, rain=replace(spec.rain, **rain_over))
    return spec


def cmd_degrade(args):
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    img = read_ppm(args.input)
    rng = np.random.default_rng(args.seed)
    spec = resolve_spec(args, rng)
    if spec.kind == "clean":
        shutil.copyfile(args.input, out)
    else:
        write_ppm(out, D.apply_degradation(img, spec, rng))
    sidecar = {"input": os.fspath(args.input), "seed": args.seed, **spec.as_dict()}
    write_keyvalue(out.with_suffix(".spec"), sidecar)
    if args.annotation:
        shutil.copyfile(args.annotation, out.with_suffix(".txt"))
    print(f"wrote {out} ({', '.join(f'{k}={v}' for k, v in spec.as_dict().items())})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# gradcheck
# ---------------------------------------------------------------------------


def cmd_gradcheck(args):
    from spectradet.gradchecks import format_table, run_checks

    results = run_checks(args.scope, seed=args.seed)
    print(format_table(results))
    if not all(r.passed for r in results):
        raise NumericalFailure("gradient check failed")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train / eval / ablate
# ---------------------------------------------------------------------------


def _model_config(args, spectral):
    from spectradet.unidet.model import ModelConfig

    return ModelConfig(segments=args.segments, granularity=args.switch_granularity, tau=args.tau,
                       spectral=spectral)


def _weights(args):
    from spectradet.unidet.losses import LossWeights

    return LossWeights(args.lambda1, args.lambda2, args.lambda3, args.lambda4)


def _plot_history(path, history, title):
    epochs = [row["epoch"] for row in history]
    series = {name: (epochs, [row[name] for row in history])
              for name in ("l_total", "l_det", "l_res", "l_cls")}
    line_plot(path, series, title=title, xlabel="epoch", ylabel="loss")


def cmd_train(args):
    from spectradet.unidet.checkpoint import save_checkpoint
    from spectradet.unidet.model import ToyModel
    from spectradet.unidet.train import TrainConfig, TrainingDiverged, make_dataset, train, write_history

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset = make_dataset(args.scenes, args.kind, args.seed, threads=args.threads)
    eval_set = make_dataset(args.eval_scenes, args.kind, args.seed + 10_000, threads=args.threads)
    cfg = TrainConfig(epochs=args.epochs, batch=args.batch, lr=args.lr, weights=_weights(args),
                      tau=args.tau, seed=args.seed, model=_model_config(args, args.mode))
    extra = {"seed": args.seed, "kinds": list(args.kind), "lr": args.lr}
    try:
        result = train(cfg, dataset, eval_dataset=eval_set,
                       on_epoch=lambda m, h: write_history(out / "metrics.csv", h))
    except TrainingDiverged as exc:
        write_history(out / "metrics.csv", exc.history)
        model = ToyModel.init(cfg.model)
        model.load_state(exc.state)
        save_checkpoint(out / "last_good.ckpt", model, {**extra, "diverged": str(exc)})
        raise NumericalFailure(f"training diverged: {exc}; partial metrics in {out / 'metrics.csv'}") from exc
    write_history(out / "metrics.csv", result.history)
    save_checkpoint(out / "model.ckpt", result.model, {**extra, "epochs": len(result.history)})
    _plot_history(out / "losses.svg", result.history, "Training losses")
    last = result.history[-1]
    print(f"epochs={len(result.history)} l_total={last['l_total']:.4f} "
          f"active_switches={last['active_switches']:.1f} map={last['map']:.4f}")
    print(f"wrote {out / 'model.ckpt'}, {out / 'metrics.csv'}, {out / 'losses.svg'}")
    return EXIT_OK


def cmd_eval(args):
    from spectradet.unidet.checkpoint import load_checkpoint
    from spectradet.unidet.train import evaluate_ap, make_dataset

    model, _ = load_checkpoint(args.checkpoint)
    dataset = make_dataset(args.scenes, args.kind, args.seed, threads=args.threads)
    res = evaluate_ap(model, dataset, threads=args.threads)
    rows = [[name, ap] for name, ap in res.per_class.items()] + [["mAP", res.mean_ap]]
    for name, ap in rows:
        print(f"{name:<10s} {ap:.4f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "eval.csv", ["class", "ap"], rows)
    return EXIT_OK


def cmd_ablate(args):
    from spectradet.degrade import CLASSES
    from spectradet.unidet.ablation import Benchmark, ablate, format_report
    from spectradet.unidet.train import TrainingDiverged

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    bench = Benchmark(train_scenes=args.scenes, test_scenes=args.eval_scenes, epochs=args.epochs,
                      batch=args.batch, lr=args.lr, kinds=args.kind)
    runs = []
    for seed in range(args.seed, args.seed + args.seeds):
        try:
            runs.append(ablate(seed, bench, _model_config(args, "dynamic"), _weights(args),
                               threads=args.threads, tau=args.tau))
        except TrainingDiverged as exc:
            raise NumericalFailure(f"seed {seed}: training diverged: {exc}") from exc
    report = format_report(runs)
    (out / "ablation.md").write_text(report)
    rows = []
    for run in runs:
        for variant, res in (("without_switches", run.without_switches), ("with_switches", run.with_switches)):
            rows.append([run.seed, variant] + [res.per_class[c] for c in CLASSES] + [res.mean_ap])
    _write_csv(out / "ablation.csv", ["seed", "variant", *CLASSES, "map"], rows)
    print(report, end="")
    return EXIT_OK


COMMANDS = {"analyze": cmd_analyze, "degrade": cmd_degrade, "gradcheck": cmd_gradcheck,
            "train": cmd_train, "eval": cmd_eval, "ablate": cmd_ablate}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    level = os.environ.get("SPECTRADET_LOG", "error").lower()
    logging.basicConfig(level=LOG_LEVELS.get(level, logging.ERROR), format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(_config_argv(parser, argv))
        return COMMANDS[args.command](args)
    except (UsageError, D.ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericalFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ArithmeticError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
