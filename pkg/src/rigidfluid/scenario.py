"""Scenario files: parsing, validation, defaults and derived objects.

A scenario is a TOML document::

    seed = 0

    [cavity]
    kind = "rectangle"          # or "curve" with a nested [cavity.shape]
    lo = [0.0, 0.0]
    hi = [2.0, 1.0]

    [[bodies]]
    name = "disk"
    shape = { kind = "disk", center = [0.7, 0.5], radius = 0.15 }
    density = { kind = "uniform", rho = 1.0 }
    margin = 0.15
    motion.eta = [{ sinusoid = { amplitude = 0.6, frequency = 3.14159 } }, 0.0]
    motion.omega = [0.0]

    [law]
    a = 1.0
    gamma = 1.4

    [fluid]
    mean_density = 3.0          # or mass = ...

    [time]
    T = 1.0
    slices = 64

    [mesh]
    h = 0.03125

Every motion component is a number, a primitive table, or a list of
primitive tables that are summed.  Omitted keys receive the documented
defaults, which are echoed in the effective scenario.
"""

import copy
import hashlib
import json
import re
import sys

import numpy as np

from .dynamics import (
    BodyMotion,
    PrescribedMotion,
    Signal,
    SolidDensity,
    fit_density_for_barycenter,
    primitive_from_dict,
)
from .eos import PressureLaw
from .errors import GeometryError, InputError, ScenarioError
from .geometry import Ball, CurveCavity, Disk, FourierCurve, RectangleCavity

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

DEFAULTS = {
    "seed": 0,
    "law": {"kind": "gamma", "a": 1.0, "gamma": 1.4},
    "fluid": {"mean_density": 3.0},
    "time": {"T": 1.0, "slices": 64, "start": 0.0, "reversed": False},
    "mesh": {"h": 0.03125, "refine_split": 4},
    "tolerances": {
        "compat_rel": 1e-6,
        "newton_rel": 1e-6,
        "eps_rel": 1e-3,
        "delta_E_rel": 1e-4,
        "energy_forms": 1e-8,
        "neumann": 1e-10,
    },
    "synthesis": {"atom_radius": None, "split": 0.1},
    "output": {"grid_nx": 129, "grid_ny": 65, "grid_every": 8},
}

BODY_DEFAULTS = {"density": {"kind": "uniform", "rho": 1.0}, "margin": None}


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _clean(obj):
    """Drop None values so the canonical echo is stable."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items() if v is not None}
    if isinstance(obj, list):
        return [_clean(v) for v in obj]
    return obj


def canonical_json(obj):
    return json.dumps(_clean(obj), sort_keys=True, separators=(",", ":"), allow_nan=False)


# --------------------------------------------------------------------------
# shape / density / motion builders


def build_shape(spec, where="shape"):
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ScenarioError("shape needs a 'kind'", field=where)
    kind = spec["kind"]
    try:
        if kind == "disk":
            return Disk(spec["center"], float(spec["radius"]))
        if kind == "ball":
            return Ball(spec["center"], float(spec["radius"]))
        if kind == "ellipse":
            return FourierCurve.ellipse(spec["center"], float(spec["a"]), float(spec["b"]),
                                        float(spec.get("angle", 0.0)))
        if kind == "fourier":
            return FourierCurve(spec["center"], spec["coeffs"])
        if kind == "radial":
            return FourierCurve.from_radial(spec["center"], float(spec["r0"]),
                                            spec.get("cos", []), spec.get("sin", []))
    except KeyError as exc:
        raise ScenarioError(f"missing shape key {exc.args[0]!r}", field=f"{where}.{exc.args[0]}") from None
    except GeometryError as exc:
        name = "radius" if "radius" in str(exc) else where
        raise ScenarioError(str(exc), field=f"{where}.{name}" if name == "radius" else where) from None
    raise ScenarioError(f"unknown shape kind {kind!r}", field=f"{where}.kind")


def build_density(spec, shape, where="density"):
    kind = spec.get("kind", "uniform")
    try:
        if kind == "uniform":
            return SolidDensity.uniform(float(spec.get("rho", 1.0)))
        if kind == "affine":
            return SolidDensity.affine(float(spec["c0"]), spec["grad"])
        if kind == "exponential":
            return SolidDensity.exponential(float(spec["c0"]), spec["grad"])
        if kind == "barycenter":
            return fit_density_for_barycenter(shape, spec["target"],
                                              spec.get("direction", [1.0, 0.0]))
    except KeyError as exc:
        raise ScenarioError(f"missing density key {exc.args[0]!r}", field=f"{where}.{exc.args[0]}") from None
    except InputError as exc:
        raise ScenarioError(str(exc), field=where) from None
    raise ScenarioError(f"unknown density kind {kind!r}", field=f"{where}.kind")


def _signal(spec, where):
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return Signal.from_spec(float(spec))
    items = spec if isinstance(spec, list) else [spec]
    terms = []
    for j, item in enumerate(items):
        if isinstance(item, (int, float)) and not isinstance(item, bool):
            terms.append(Signal.from_spec(float(item)).terms[0])
            continue
        if not isinstance(item, dict) or len(item) != 1:
            raise ScenarioError("motion primitive must be a one-key table", field=f"{where}[{j}]")
        (key,) = item.keys()
        try:
            terms.append(primitive_from_dict(item))
        except InputError:
            raise ScenarioError(f"unknown motion primitive {key!r}", field=key) from None
        except (KeyError, TypeError) as exc:
            raise ScenarioError(f"bad parameters for {key!r}: {exc}", field=f"{where}.{key}") from None
    return Signal(terms)


def build_body_motion(spec, dim, where):
    eta = spec.get("eta", [0.0] * dim)
    omega = spec.get("omega", [0.0] * (1 if dim == 2 else 3))
    if not isinstance(eta, list) or len(eta) != dim:
        raise ScenarioError(f"'eta' needs {dim} components", field=f"{where}.eta")
    n_om = 1 if dim == 2 else 3
    if not isinstance(omega, list):
        omega = [omega]
    if len(omega) != n_om:
        raise ScenarioError(f"'omega' needs {n_om} component(s)", field=f"{where}.omega")
    return BodyMotion(
        [_signal(e, f"{where}.eta[{j}]") for j, e in enumerate(eta)],
        [_signal(w, f"{where}.omega[{j}]") for j, w in enumerate(omega)],
    )


# --------------------------------------------------------------------------
# scenario


class Scenario:
    """Validated scenario: the effective configuration plus derived objects."""

    def __init__(self, data, source=None):
        self.source = source
        self.data = self._validate(data)
        self._cache = {}

    # validation ---------------------------------------------------------
    @staticmethod
    def _validate(raw):
        if not isinstance(raw, dict):
            raise ScenarioError("scenario must be a table")
        known = set(DEFAULTS) | {"cavity", "bodies", "name"}
        for k in raw:
            if k not in known:
                raise ScenarioError(f"unknown key {k!r}", field=k)
        if "cavity" not in raw:
            raise ScenarioError("missing [cavity] table", field="cavity")
        if not raw.get("bodies"):
            raise ScenarioError("at least one [[bodies]] entry is required", field="bodies")
        data = _merge(DEFAULTS, {k: v for k, v in raw.items() if k != "bodies"})
        data["bodies"] = []
        for i, b in enumerate(raw["bodies"]):
            if "shape" not in b:
                raise ScenarioError("body needs a 'shape'", field=f"bodies[{i}].shape")
            bb = _merge(BODY_DEFAULTS, b)
            bb.setdefault("name", f"body{i}")
            bb.setdefault("motion", {})
            data["bodies"].append(bb)
        t = data["time"]
        for key in ("T",):
            if not float(t[key]) > 0:
                raise ScenarioError("T must be positive", field=f"time.{key}")
        if int(t["slices"]) < 3:
            raise ScenarioError("at least 3 time slices are required", field="time.slices")
        t["T"] = float(t["T"])
        t["slices"] = int(t["slices"])
        t["start"] = float(t["start"])
        t["reversed"] = bool(t["reversed"])
        if not float(data["mesh"]["h"]) > 0:
            raise ScenarioError("mesh size must be positive", field="mesh.h")
        if int(data["mesh"]["refine_split"]) < 1:
            raise ScenarioError("refine_split must be at least 1", field="mesh.refine_split")
        for k, v in data["tolerances"].items():
            if v is None or not float(v) > 0:
                raise ScenarioError("tolerances must be positive", field=f"tolerances.{k}")
        law = data["law"]
        if law.get("kind", "gamma") != "gamma":
            raise ScenarioError(f"unknown pressure law {law['kind']!r}", field="law.kind")
        try:
            PressureLaw(float(law["a"]), float(law["gamma"]))
        except InputError as exc:
            raise ScenarioError(str(exc), field="law") from None
        fl = data["fluid"]
        if "mass" in fl and fl.get("mass") is not None:
            if not float(fl["mass"]) > 0:
                raise ScenarioError("fluid mass must be positive", field="fluid.mass")
            fl.pop("mean_density", None)
        elif not float(fl.get("mean_density", 0)) > 0:
            raise ScenarioError("fluid mean density must be positive", field="fluid.mean_density")
        # build everything once to surface errors now
        sc = Scenario.__new__(Scenario)
        sc.data = data
        sc._cache = {}
        shapes = sc.shapes()
        cav = sc.cavity()
        dims = {s.dim for s in shapes} | {cav.dim}
        if len(dims) != 1:
            raise ScenarioError("cavity and bodies must share the dimension", field="bodies")
        sc.motion()
        sc.densities()
        return data

    # derived objects ----------------------------------------------------
    @property
    def dim(self):
        return self.cavity().dim

    def cavity(self):
        if "cavity" not in self._cache:
            c = self.data["cavity"]
            kind = c.get("kind", "rectangle")
            try:
                if kind == "rectangle":
                    cav = RectangleCavity(c["lo"], c["hi"])
                elif kind == "curve":
                    cav = CurveCavity(build_shape(c["shape"], "cavity.shape"))
                else:
                    raise ScenarioError(f"unknown cavity kind {kind!r}", field="cavity.kind")
            except KeyError as exc:
                raise ScenarioError(f"missing cavity key {exc.args[0]!r}", field=f"cavity.{exc.args[0]}") from None
            except GeometryError as exc:
                raise ScenarioError(str(exc), field="cavity") from None
            self._cache["cavity"] = cav
        return self._cache["cavity"]

    def shapes(self):
        """Body shapes at base time 0."""
        if "shapes" not in self._cache:
            self._cache["shapes"] = [
                build_shape(b["shape"], f"bodies[{i}].shape") for i, b in enumerate(self.data["bodies"])
            ]
        return self._cache["shapes"]

    def densities(self):
        if "dens" not in self._cache:
            self._cache["dens"] = [
                build_density(b["density"], s, f"bodies[{i}].density")
                for i, (b, s) in enumerate(zip(self.data["bodies"], self.shapes()))
            ]
        return self._cache["dens"]

    def base_motion(self):
        """Motion on the base clock (time 0 = the poses in the file)."""
        if "motion" not in self._cache:
            dim = self.shapes()[0].dim
            bodies = [
                build_body_motion(b.get("motion", {}), dim, f"bodies[{i}].motion")
                for i, b in enumerate(self.data["bodies"])
            ]
            self._cache["motion"] = PrescribedMotion(bodies, self.T)
        return self._cache["motion"]

    def motion(self):
        """Motion seen by this scenario (window and direction applied)."""
        t = self.data["time"]
        return self.base_motion().window(t["start"], t["T"], t["reversed"])

    def law(self):
        law = self.data["law"]
        return PressureLaw(float(law["a"]), float(law["gamma"]))

    @property
    def T(self):
        return self.data["time"]["T"]

    @property
    def slices(self):
        return self.data["time"]["slices"]

    @property
    def times(self):
        return np.linspace(0.0, self.T, self.slices)

    @property
    def dt(self):
        return self.T / (self.slices - 1)

    @property
    def h(self):
        return float(self.data["mesh"]["h"])

    @property
    def seed(self):
        return int(self.data["seed"])

    @property
    def tolerances(self):
        return self.data["tolerances"]

    def margins(self):
        out = []
        for b, s in zip(self.data["bodies"], self.shapes()):
            m = b.get("margin")
            if m is None:
                m = 0.5 * (s.diameter / 2)
            out.append(float(m))
        return out

    # serialization ------------------------------------------------------
    def to_dict(self):
        return copy.deepcopy(self.data)

    def echo(self):
        return canonical_json(self.data)

    def content_hash(self):
        return hashlib.sha256(self.echo().encode()).hexdigest()

    def replace(self, **sections):
        """Copy with updated values; keys are dotted paths, e.g. ``time.slices``."""
        data = copy.deepcopy(self.data)
        for path, value in sections.items():
            set_path(data, path.replace("__", "."), value)
        return Scenario(data, self.source)

    def reversed(self):
        """Time-reversed scenario: same window traversed backwards."""
        return self.replace(**{"time.reversed": not self.data["time"]["reversed"]})

    def tail(self, k):
        """Scenario restarted at grid index ``k`` (same time step)."""
        t = self.data["time"]
        if not 0 <= k < self.slices - 1:
            raise InputError("restart index out of range")
        dt = self.dt
        if t["reversed"]:
            return self.replace(**{"time.T": (self.slices - 1 - k) * dt,
                                   "time.slices": self.slices - k})
        return self.replace(**{"time.start": t["start"] + k * dt,
                               "time.T": (self.slices - 1 - k) * dt,
                               "time.slices": self.slices - k})


def set_path(data, path, value):
    keys = path.split(".")
    cur = data
    for k in keys[:-1]:
        m = re.fullmatch(r"(\w+)\[(\d+)\]", k)
        if m:
            cur = cur[m.group(1)][int(m.group(2))]
        else:
            cur = cur.setdefault(k, {})
    last = keys[-1]
    m = re.fullmatch(r"(\w+)\[(\d+)\]", last)
    if m:
        cur[m.group(1)][int(m.group(2))] = value
    else:
        cur[last] = value


def get_path(data, path):
    cur = data
    for k in path.split("."):
        m = re.fullmatch(r"(\w+)\[(\d+)\]", k)
        cur = cur[m.group(1)][int(m.group(2))] if m else cur[k]
    return cur


def loads_scenario(text, source=None):
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ScenarioError(f"parse error: {exc}", line=int(m.group(1)) if m else None) from None
    return Scenario(raw, source)


def load_scenario(path):
    """Read and validate a scenario file."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return loads_scenario(text, str(path))


def time_reverse_scenario(scenario):
    return scenario.reversed()


__all__ = [
    "Scenario",
    "DEFAULTS",
    "load_scenario",
    "loads_scenario",
    "time_reverse_scenario",
    "canonical_json",
    "build_shape",
    "build_density",
    "build_body_motion",
    "set_path",
    "get_path",
]
