import numpy as np
import pytest

from rigidfluid.errors import InputError, ScenarioError
from rigidfluid.scenario import load_scenario, loads_scenario

MINIMAL = """
[cavity]
kind = "rectangle"
lo = [0.0, 0.0]
hi = [2.0, 1.0]

[[bodies]]
shape = { kind = "disk", center = [0.7, 0.5], radius = 0.15 }
motion.eta = [{ sinusoid = { amplitude = 0.6, frequency = 3.0 } }, 0.0]
motion.omega = [0.0]
"""


def test_defaults_are_filled():
    sc = loads_scenario(MINIMAL)
    assert sc.slices == 64 and sc.T == 1.0 and sc.seed == 0
    assert sc.tolerances["newton_rel"] == 1e-6
    assert sc.times[0] == 0.0 and sc.times[-1] == pytest.approx(1.0)
    assert sc.margins()[0] > 0


def test_bad_radius_names_field():
    with pytest.raises(ScenarioError) as exc:
        loads_scenario(MINIMAL.replace("radius = 0.15", "radius = -1.0"))
    assert exc.value.field == "bodies[0].shape.radius"
    assert "bodies[0].shape.radius" in str(exc.value)


def test_unknown_primitive_names_token():
    with pytest.raises(ScenarioError) as exc:
        loads_scenario(MINIMAL.replace("sinusoid", "wobble"))
    assert exc.value.field == "wobble"


def test_parse_error_carries_line():
    with pytest.raises(ScenarioError) as exc:
        loads_scenario("[cavity\nkind = 1\n")
    assert exc.value.line == 1


def test_unknown_top_level_key():
    with pytest.raises(ScenarioError, match="unknown key"):
        loads_scenario(MINIMAL + "\n[extra]\nx = 1\n")


def test_reverse_twice_is_identity():
    sc = load_scenario("scenarios/translating_disk.toml")
    rr = sc.reversed().reversed()
    assert rr.echo() == sc.echo()
    assert rr.content_hash() == sc.content_hash()
    assert sc.reversed().content_hash() != sc.content_hash()


def test_reversed_motion_runs_backwards():
    sc = load_scenario("scenarios/translating_disk.toml")
    f, r = sc.motion(), sc.reversed().motion()
    t = np.linspace(0, 1, 7)
    assert np.allclose(r.eta(0, t, 0), -f.eta(0, 1 - t, 0))
    assert np.allclose(r.eta(0, t, 1), f.eta(0, 1 - t, 1))


def test_tail_keeps_time_step_and_end():
    sc = load_scenario("scenarios/translating_disk.toml").replace(**{"time.slices": 17})
    tl = sc.tail(8)
    assert tl.slices == 9
    assert tl.dt == pytest.approx(sc.dt)
    assert tl.data["time"]["start"] + tl.T == pytest.approx(1.0)
    with pytest.raises(InputError):
        sc.tail(16)


def test_replace_and_hash_are_deterministic():
    sc = load_scenario("scenarios/translating_disk.toml")
    a = sc.replace(**{"bodies[0].margin": 0.1})
    b = sc.replace(**{"bodies[0].margin": 0.1})
    assert a.content_hash() == b.content_hash() != sc.content_hash()
    assert a.margins()[0] == 0.1
