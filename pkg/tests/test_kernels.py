import os
import subprocess
import sys

import numpy as np
import pytest

from rigidfluid import kernels
from rigidfluid.geometry import FourierCurve

needs_compiled = pytest.mark.skipif(kernels.compiled is None, reason="compiled kernels not built")
CURVE = FourierCurve.from_radial((0.2, -0.1), 1.0, [0.0, 0.05], [0.0, 0.0, 0.03])


def test_backend_name():
    assert kernels.BACKEND in ("compiled", "python")


def test_pure_python_switch():
    env = dict(os.environ, RIGIDFLUID_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import rigidfluid.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@needs_compiled
def test_curve_eval_backends_agree(rng):
    s = rng.uniform(0, 1, 200)
    a = kernels.python.curve_eval(CURVE.center, CURVE.coeffs, s)
    b = kernels.compiled.curve_eval(CURVE.center, CURVE.coeffs, s)
    assert np.allclose(a, b, rtol=0, atol=1e-13)


@needs_compiled
def test_curve_project_backends_agree(rng):
    pts = rng.uniform(-2, 2, (100, 2))
    s0 = rng.uniform(0, 1, 100)
    # start from the nearest dense sample like the geometry layer does
    dense = np.linspace(0, 1, 512, endpoint=False)
    v = CURVE.evaluate(dense)
    d2 = (pts[:, :1] - v[0]) ** 2 + (pts[:, 1:] - v[1]) ** 2
    s0 = dense[np.argmin(d2, axis=1)]
    a = kernels.python.curve_project(CURVE.center, CURVE.coeffs, pts[:, 0], pts[:, 1], s0)
    b = kernels.compiled.curve_project(CURVE.center, CURVE.coeffs, pts[:, 0], pts[:, 1], s0)
    assert np.allclose(np.mod(a, 1), np.mod(b, 1), atol=1e-12)


@needs_compiled
def test_normal_inverse_backends_agree(rng):
    th = rng.uniform(0, 2 * np.pi, 100)
    s0 = np.mod(th / (2 * np.pi), 1.0)
    a = kernels.python.curve_normal_inverse(CURVE.center, CURVE.coeffs, th, s0)
    b = kernels.compiled.curve_normal_inverse(CURVE.center, CURVE.coeffs, th, s0)
    assert np.allclose(np.mod(a, 1), np.mod(b, 1), atol=1e-12)


@needs_compiled
def test_p1_assembly_backends_agree(rng):
    pts = rng.uniform(0, 1, (40, 2))
    from scipy.spatial import Delaunay

    tris = Delaunay(pts).simplices.astype(np.int64)
    a = kernels.python.p1_assemble(pts, tris)
    b = kernels.compiled.p1_assemble(pts, tris)
    for x, y in zip(a, b):
        assert np.allclose(x, y, atol=1e-12)


@pytest.mark.parametrize("backend", ["python", "compiled"])
def test_p1_stiffness_annihilates_constants(backend, rng):
    mod = getattr(kernels, backend)
    if mod is None:
        pytest.skip("compiled kernels not built")
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    tris = np.array([[0, 1, 2], [1, 3, 2]], dtype=np.int64)
    area, grads, kloc = mod.p1_assemble(pts, tris)
    assert np.allclose(area, 0.5)
    assert np.allclose(kloc.sum(axis=2), 0.0, atol=1e-14)


@needs_compiled
def test_benchmark_script_runs(capsys):
    import runpy

    mod = runpy.run_path("benchmarks/bench_kernels.py")
    assert mod["main"](["--repeat", "1"]) == 0
    out = capsys.readouterr().out
    assert "p1_assemble" in out and "speedup" in out
