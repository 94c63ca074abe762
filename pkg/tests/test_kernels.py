import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from finslerlab import kernels
from finslerlab.geodesy import distance_field, distance_from_set
from finslerlab.grid import Grid2D
from finslerlab.metric import MetricModel

from conftest import B03

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "benchmarks"))
from bench_sweep import _pack_inputs  # noqa: E402

needs_compiled = pytest.mark.skipif("compiled" not in kernels.available(), reason="extension not built")


def on_both(fn):
    out = {}
    for be in kernels.available():
        prev = kernels.use_backend(be)
        try:
            out[be] = fn()
        finally:
            kernels.use_backend(prev)
    return out


def test_python_backend_always_available():
    assert "python" in kernels.available()
    with pytest.raises(ValueError):
        kernels.use_backend("fortran")


@needs_compiled
@pytest.mark.parametrize("scheme", ["semi-lagrangian", "lax-friedrichs"])
@pytest.mark.parametrize("metric", ["randers", "sphere", "randers-field"])
def test_sweeps_agree(scheme, metric):
    m = {"randers": MetricModel.randers(B03), "sphere": MetricModel.sphere(),
         "randers-field": MetricModel.randers(lambda x: 0.2 * np.stack([np.cos(x[..., 1]), np.sin(x[..., 0])], -1))}[metric]
    g = Grid2D.centered((0.1, 0.0), 0.6, 0.04)
    res = on_both(lambda: distance_field(m, (0.1, 0.0), g, scheme=scheme).values)
    np.testing.assert_allclose(res["compiled"], res["python"], rtol=1e-12, atol=1e-14)


@needs_compiled
def test_distance_from_set_agrees():
    m = MetricModel.randers(B03)
    g = Grid2D.centered((0.0, 0.0), 0.5, 0.05)
    init = np.full(g.shape, np.inf)
    init[0, :] = 0.0
    res = on_both(lambda: distance_from_set(m, g, init, "backward"))
    np.testing.assert_allclose(res["compiled"], res["python"], rtol=1e-12)


@needs_compiled
def test_greedy_pack_identical():
    pack = _pack_inputs(40)
    res = on_both(lambda: kernels.greedy_pack(*pack[:-1], pack[-1].copy()))
    np.testing.assert_array_equal(res["compiled"], res["python"])


def test_env_selects_python_backend():
    env = dict(os.environ, FINSLERLAB_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", "from finslerlab import kernels; print(kernels.backend())"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_distance_records_backend():
    g = Grid2D.centered((0.0, 0.0), 0.5, 0.05)
    df = distance_field(MetricModel.euclidean(), (0.0, 0.0), g)
    assert df.stats["backend"] == kernels.backend()
