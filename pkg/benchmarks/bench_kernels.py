"""Compare the compiled kernels with the numpy fallback.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5]

Prints the best wall time of each kernel on both backends, the speedup and
the largest difference between the two results.
"""

import argparse
import timeit

import numpy as np

from rigidfluid import kernels
from rigidfluid.geometry import CurveCavity, Disk, FourierCurve
from rigidfluid.mesh import build_fluid_mesh


def cases(rng):
    curve = FourierCurve.from_radial((0.2, -0.1), 1.0, [0.0, 0.05], [0.0, 0.0, 0.03])
    c, k = curve.center, curve.coeffs
    s = rng.uniform(0, 1, 20000)
    pts = rng.uniform(-2, 2, (5000, 2))
    # polar angle is a good start on this near-circular curve
    s0 = np.mod(np.arctan2(pts[:, 1] - c[1], pts[:, 0] - c[0]) / (2 * np.pi), 1.0)
    theta = rng.uniform(0, 2 * np.pi, 5000)
    mesh = build_fluid_mesh(CurveCavity(Disk((0, 0), 1.0)), [Disk((0, 0), 0.5)], 1 / 64)
    return {
        "curve_eval (20000 points)": lambda b: b.curve_eval(c, k, s),
        "curve_project (5000 points)":
            lambda b: b.curve_project(c, k, pts[:, 0].copy(), pts[:, 1].copy(), s0.copy()),
        "curve_normal_inverse (5000 directions)":
            lambda b: b.curve_normal_inverse(c, k, theta, theta / (2 * np.pi)),
        f"p1_assemble ({len(mesh.tris)} triangles)": lambda b: b.p1_assemble(mesh.points, mesh.tris),
    }


def _diff(a, b):
    if isinstance(a, tuple):
        return max(_diff(x, y) for x, y in zip(a, b))
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if kernels.compiled is None:
        print("compiled kernels are not built; nothing to compare")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':42s} {'compiled':>10s} {'python':>10s} {'speedup':>8s} {'max diff':>9s}")
    for name, fn in cases(rng).items():
        tc = min(timeit.repeat(lambda: fn(kernels.compiled), number=1, repeat=args.repeat))
        tp = min(timeit.repeat(lambda: fn(kernels.python), number=1, repeat=args.repeat))
        d = _diff(fn(kernels.compiled), fn(kernels.python))
        print(f"{name:42s} {tc * 1e3:8.2f}ms {tp * 1e3:8.2f}ms {tp / tc:7.1f}x {d:9.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
