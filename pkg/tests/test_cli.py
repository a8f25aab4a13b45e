import csv
import importlib
import subprocess
import sys
from xml.dom import minidom

import numpy as np
import pytest

from spectradet import cli
from spectradet import imageio as io
from spectradet import tensor as T
from spectradet.degrade import lowlight
from spectradet.spectral import dct2_forward, spectral_energy

TINY_TRAIN = ["--scenes", "6", "--eval-scenes", "4", "--epochs", "1", "--batch", "3"]


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert all(len(r) == len(rows[0]) for r in rows)
    return rows[0], rows[1:]


def assert_svg(path):
    doc = minidom.parse(str(path))
    assert doc.documentElement.tagName == "svg"
    assert doc.documentElement.getAttribute("viewBox") == "0 0 800 500"


@pytest.fixture
def images(tmp_path):
    r = np.random.default_rng(0)
    clean = r.integers(0, 256, (3, 16, 16)) / 255.0
    io.write_ppm(tmp_path / "clean.ppm", clean)
    io.write_ppm(tmp_path / "dark.ppm", lowlight(clean, 3))
    io.write_ppm(tmp_path / "flat.ppm", np.full((3, 8, 8), 0.4))
    io.write_ppm(tmp_path / "half.ppm", np.full((3, 8, 8), 128 / 255))
    (tmp_path / "scene.txt").write_text("circle 1 1 6 6\n")
    return tmp_path


def test_analyze_constant_image(images):
    assert cli.main(["analyze", str(images / "flat.ppm"), "--bands", "4", "--out", str(images)]) == 0
    header, rows = read_csv(images / "flat_bands.csv")
    assert header == ["band", "r_lo", "r_hi", "energy_r", "energy_g", "energy_b", "energy", "fraction"]
    assert float(rows[0][7]) == pytest.approx(1.0, abs=1e-12)
    assert all(float(r[7]) < 1e-20 for r in rows[1:])
    assert_svg(images / "flat_bands.svg")


def test_analyze_single_band(images):
    cli.main(["analyze", str(images / "clean.ppm"), "--bands", "1", "--out", str(images)])
    _, rows = read_csv(images / "clean_bands.csv")
    img = io.read_ppm(images / "clean.ppm")
    assert len(rows) == 1
    assert float(rows[0][6]) == pytest.approx(np.sum(dct2_forward(img) ** 2), rel=1e-12)


def test_analyze_ratio_recomputed(images):
    out = images / "a"
    cli.main(["analyze", str(images / "dark.ppm"), "--reference", str(images / "clean.ppm"),
              "--bands", "5", "--out", str(out)])
    header, rows = read_csv(out / "dark_ratio.csv")
    assert header == ["band", "clean_energy", "degraded_energy", "ratio"] and len(rows) == 5
    # independent two-pass recomputation
    clean, dark = io.read_ppm(images / "clean.ppm"), io.read_ppm(images / "dark.ppm")
    ec = sum(spectral_energy(dct2_forward(clean[c]), 5) for c in range(3))
    ed = sum(spectral_energy(dct2_forward(dark[c]), 5) for c in range(3))
    np.testing.assert_allclose([float(r[3]) for r in rows], ed / ec, rtol=1e-12)
    assert_svg(out / "dark_ratio.svg")


def test_analyze_missing_file(images, capsys):
    assert cli.main(["analyze", str(images / "nope.ppm"), "--out", str(images)]) == cli.EXIT_IO
    assert "nope.ppm" in capsys.readouterr().err
    (images / "junk.ppm").write_bytes(b"GIF89a")
    assert cli.main(["analyze", str(images / "junk.ppm"), "--out", str(images)]) == cli.EXIT_IO


def test_degrade_lowlight(images):
    out = images / "o" / "ll.ppm"
    assert cli.main(["degrade", str(images / "half.ppm"), "--kind", "lowlight", "--r", "2", "--out", str(out)]) == 0
    raw = out.read_bytes()
    assert set(raw[len(b"P6\n8 8\n255\n"):]) == {64}  # round(255 * 0.25)
    assert io.read_keyvalue(out.with_suffix(".spec"))["r"] == "2"


def test_degrade_clean_copy_and_annotation(images):
    out = images / "copy.ppm"
    cli.main(["degrade", str(images / "clean.ppm"), "--kind", "clean", "--out", str(out),
              "--annotation", str(images / "scene.txt")])
    assert out.read_bytes() == (images / "clean.ppm").read_bytes()
    assert (images / "copy.txt").read_text() == "circle 1 1 6 6\n"


@pytest.mark.parametrize("kind", ["fog", "rain", "snow", "rainfog", "sand"])
def test_degrade_deterministic(images, kind):
    a, b = images / f"{kind}1.ppm", images / f"{kind}2.ppm"
    for out in (a, b):
        cli.main(["degrade", str(images / "clean.ppm"), "--kind", kind, "--seed", "4", "--out", str(out)])
    assert a.read_bytes() == b.read_bytes()
    assert a.with_suffix(".spec").read_text().split("\n")[1:] == b.with_suffix(".spec").read_text().split("\n")[1:]


def test_degrade_range_errors(images, capsys):
    args = ["degrade", str(images / "clean.ppm"), "--out", str(images / "x.ppm")]
    assert cli.main(args + ["--kind", "snow", "--w", "0.2"]) == cli.EXIT_USAGE
    assert "[0.5, 1.0]" in capsys.readouterr().err
    assert cli.main(args + ["--kind", "lowlight", "--r", "-1"]) == cli.EXIT_USAGE
    assert cli.main(args + ["--kind", "hail"]) == cli.EXIT_USAGE
    assert cli.main(["degrade", str(images / "none.ppm"), "--kind", "fog", "--out", "x.ppm"]) == cli.EXIT_IO


def test_usage_errors():
    assert cli.main([]) == cli.EXIT_USAGE
    assert cli.main(["train", "--epochs", "0"]) == cli.EXIT_USAGE
    assert cli.main(["gradcheck", "everything"]) == cli.EXIT_USAGE


def test_gradcheck_table_is_repeatable(capsys):
    assert cli.main(["gradcheck", "spectral", "--seed", "7"]) == 0
    first = capsys.readouterr().out
    cli.main(["gradcheck", "spectral", "--seed", "7"])
    assert capsys.readouterr().out == first
    assert first.rstrip().endswith("checks passed")


def test_gradcheck_negative_control(monkeypatch, capsys):
    good = T._unbroadcast
    # shared by the add/sub/mul backward rules; a 0.1% error must be caught
    monkeypatch.setattr(T, "_unbroadcast", lambda g, shape: good(g, shape) * 1.001)
    assert cli.main(["gradcheck", "tensor-core"]) == cli.EXIT_NUMERIC
    assert "FAIL" in capsys.readouterr().out


def test_train_smoke_and_eval(tmp_path, capsys):
    run = tmp_path / "run"
    assert cli.main(["train", "--out", str(run), *TINY_TRAIN]) == 0
    header, rows = read_csv(run / "metrics.csv")
    assert header == ["epoch", "l_det", "l_res", "l_fre", "l_cls", "l_total", "lr", "active_switches", "map"]
    assert len(rows) == 1
    assert (run / "model.ckpt").read_bytes()[:8] == b"SPDTCKPT"
    assert_svg(run / "losses.svg")
    capsys.readouterr()
    ckpt = str(run / "model.ckpt")
    cli.main(["eval", ckpt, "--scenes", "4", "--out", str(run)])
    first = capsys.readouterr().out
    cli.main(["eval", ckpt, "--scenes", "4", "--threads", "2"])
    assert capsys.readouterr().out == first
    header, rows = read_csv(run / "eval.csv")
    assert header == ["class", "ap"] and rows[-1][0] == "mAP"


def test_train_config_file_and_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# smoke\nscenes = 6\neval_scenes = 4\nepochs = 3\nbatch = 3\nmode = static\n")
    run = tmp_path / "cfgrun"
    assert cli.main(["train", "--config", str(cfg), "--epochs", "1", "--out", str(run)]) == 0
    _, rows = read_csv(run / "metrics.csv")
    assert len(rows) == 1 and float(rows[0][3]) == 0.0  # static: no frequency loss
    cfg.write_text("learning_rate = 0.1\n")
    assert cli.main(["train", "--config", str(cfg), "--out", str(run)]) == cli.EXIT_USAGE
    assert cli.main(["train", "--config", str(tmp_path / "missing.cfg")]) == cli.EXIT_IO


def test_train_divergence_keeps_partial_metrics(tmp_path, monkeypatch):
    train_mod = importlib.import_module("spectradet.unidet.train")

    real = train_mod.batch_losses
    calls = {"n": 0}

    def flaky(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] > 2:
            raise train_mod.TrainingAbort("L_Det is not finite (nan)")
        return real(*args, **kwargs)

    monkeypatch.setattr(train_mod, "batch_losses", flaky)
    run = tmp_path / "div"
    args = ["train", "--out", str(run), "--scenes", "6", "--eval-scenes", "2", "--epochs", "3", "--batch", "3"]
    assert cli.main(args) == cli.EXIT_NUMERIC
    _, rows = read_csv(run / "metrics.csv")
    assert len(rows) == 1
    assert (run / "last_good.ckpt").exists() and not (run / "model.ckpt").exists()


def test_ablate_report(tmp_path, capsys):
    out = tmp_path / "abl"
    assert cli.main(["ablate", "--out", str(out), "--seeds", "2", *TINY_TRAIN]) == 0
    report = (out / "ablation.md").read_text()
    assert report.count("| DCT | Switches | circle | square | triangle | mAP |") == 2
    assert report.count("| ✓ | ✗ |") == 2 and report.count("| ✓ | ✓ |") == 2
    assert "mAP delta (switches - none)" in report and "of 2 seeds" in report
    header, rows = read_csv(out / "ablation.csv")
    assert header == ["seed", "variant", "circle", "square", "triangle", "map"]
    assert [r[1] for r in rows] == ["without_switches", "with_switches"] * 2


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "spectradet.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip()
