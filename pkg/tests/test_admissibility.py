import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import annulus_mesh

from rigidfluid.admissibility import (
    EnergyParts,
    LambdaSchedule,
    default_eps,
    energy_inequality_check,
    enforce_decreasing_energy,
    kinetic_energy_field,
    lambda_max_rank_one,
    select_lambda,
    total_energy,
    verify_slack,
)
from rigidfluid.eos import PressureLaw
from rigidfluid.errors import InputError
from rigidfluid.fields import FluidState, NeumannSolution, SliceState


def test_lambda_max_examples():
    assert lambda_max_rank_one([3.0, 4.0], 5.0) == pytest.approx(5.0)
    assert lambda_max_rank_one(np.zeros(2), 1.0) == 0.0
    with pytest.raises(InputError):
        lambda_max_rank_one([1.0, 0.0], 0.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3), st.floats(0.1, 10), st.floats(0.1, 4))
def test_lambda_max_matches_eigensolver(m, rho, c):
    m = np.array(m)
    ref = np.linalg.eigvalsh(np.outer(m, m) / rho)[-1]
    assert lambda_max_rank_one(m, rho) == pytest.approx(ref, abs=1e-12 * max(1.0, ref))
    # homogeneity: degree 2 in m, degree -1 in rho
    assert lambda_max_rank_one(c * m, rho) == pytest.approx(c * c * lambda_max_rank_one(m, rho), rel=1e-12, abs=1e-300)
    assert lambda_max_rank_one(m, c * rho) == pytest.approx(lambda_max_rank_one(m, rho) / c, rel=1e-12, abs=1e-300)


class _ConstantPressure:
    def __init__(self, p):
        self.p = p
        self.law = PressureLaw(1.0, 1.4)

    def value(self, t, pts):
        return np.full(len(np.atleast_2d(pts)), self.p)


@pytest.fixture(scope="module")
def static_state():
    mesh = annulus_mesh(1 / 8)
    pr = _ConstantPressure(2.0)
    n, nt = mesh.n_nodes, len(mesh.tris)
    slices = []
    times = np.linspace(0, 1, 3)
    for t in times:
        sol = NeumannSolution(mesh, np.zeros(n), np.zeros((nt, 2)), 0.0, 0.0, 0.0, 0.0)
        p = np.full(n, 2.0)
        s = SliceState(t, mesh, p, pr.law.density(p), np.zeros(n), sol, np.zeros(n))
        slices.append(s)
    return FluidState(times, slices, pr, pr.law)


def test_select_lambda_on_static_state(static_state):
    eps = default_eps(static_state)
    assert eps == pytest.approx(2e-3)
    sch = select_lambda(static_state)
    assert np.allclose(sch.attained, 2.0, rtol=1e-14)
    assert np.allclose(sch.values, 2.0 + eps, rtol=1e-14)
    sl = verify_slack(static_state, sch)
    assert np.allclose(sl, eps, rtol=1e-10)
    E = kinetic_energy_field(static_state.slices[0], sch.values[0], static_state.pressure)
    assert np.allclose(E, eps, rtol=1e-10)


def _parts(base, area):
    return [EnergyParts(t=float(k), area_mesh=area, area_exact=area, int_P_mesh=b, int_p_mesh=0.0,
                        int_P_band=b, int_p_band=0.0, int_phit=0.0, rigid=0.0)
            for k, b in enumerate(base)]


def test_enforce_decreasing_raises_lambda_minimally():
    parts = _parts([1.0, 1.0, 2.0, 0.5], 2.0)
    sch = LambdaSchedule(np.arange(4.0), np.zeros(4), 1e-3, np.zeros(4))
    out = enforce_decreasing_energy(parts, sch, 0.1)
    E = np.array([p.direct(L) for p, L in zip(parts, out.values)])
    assert np.all(np.diff(E) <= -0.1 + 1e-15)
    assert np.all(out.values >= sch.values)
    assert out.values[3] == 0.0  # the last slice is never touched
    assert E[2] == pytest.approx(2.0)  # already above E[3] + delta
    assert E[1] == pytest.approx(2.1)
    direct, closed, agree = total_energy(parts, out.values)
    assert agree < 1e-15


def test_energy_already_decreasing_is_unchanged():
    parts = _parts([3.0, 2.0, 1.0], 1.0)
    sch = LambdaSchedule(np.arange(3.0), np.ones(3), 1e-3, np.zeros(3))
    out = enforce_decreasing_energy(parts, sch, 0.5)
    assert np.array_equal(out.values, sch.values)


def test_energy_inequality_against_initial_data():
    E = np.array([1.0, 0.9, 0.8])
    assert energy_inequality_check(E, 0)["pass"]
    assert energy_inequality_check(E, 1)["pass"]
    bad = energy_inequality_check(E, 0, initial_energy=0.5)
    assert not bad["pass"] and bad["expected_failure_possible"]
    assert bad["max_excess"] == pytest.approx(0.5)
    # only the s = 0 check uses the initial-data energy
    assert energy_inequality_check(E, 1, initial_energy=0.5)["pass"]
