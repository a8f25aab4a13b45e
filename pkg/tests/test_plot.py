from xml.dom import minidom

import numpy as np
import pytest

from spectradet.plot import bar_plot, line_plot, nice_ticks


@pytest.mark.parametrize("lo,hi", [(0, 1), (0.0013, 0.0091), (-3, 250), (5, 5)])
def test_nice_ticks_cover_range(lo, hi):
    ticks = nice_ticks(lo, hi)
    assert ticks[0] <= lo and ticks[-1] >= hi
    steps = np.diff(ticks)
    assert len(ticks) >= 2 and np.allclose(steps, steps[0])


def test_line_plot_skips_nan(tmp_path):
    path = tmp_path / "l.svg"
    line_plot(path, {"a & b": ([1, 2, 3], [0.5, float("nan"), 0.2]), "c": ([1, 2], [1.0, 2.0])},
              title="t <1>", xlabel="x", ylabel="y")
    doc = minidom.parse(str(path))
    assert "nan" not in path.read_text()
    assert len(doc.getElementsByTagName("polyline")) + len(doc.getElementsByTagName("path")) >= 2


def test_bar_plot_well_formed(tmp_path):
    path = tmp_path / "b.svg"
    bar_plot(path, ["0", "1", "2"], {"with": [0.1, 0.5, 0.2], "without": [0.2, 0.1, 0.0]},
             title="bars", xlabel="band", ylabel="fraction")
    doc = minidom.parse(str(path))
    assert len(doc.getElementsByTagName("rect")) >= 6
