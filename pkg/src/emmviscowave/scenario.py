"""Scenario configuration: TOML parsing, validation and canonical serialization.

A scenario file holds either one scenario at top level or a list of them
under ``[[scenario]]``::

    kind = "decay"
    seed = 0

    [mesh]
    nx = 8
    ny = 8
    labels = { left = "D" }

    [material]
    rho = 1.0
    [[material.branches]]
    lame = [1.0, 1.0]
    eta = 0.2

    [time]
    dt = 0.01
    T = 20.0

Error messages name the offending key as a dotted path.
"""
import hashlib
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .material import EmmMaterial, MaxwellBranch, isotropic
from .mesh import DIRICHLET, NEUMANN, SIDES, MeshError, load_mesh, rect_mesh

KINDS = ("identities", "decay", "ad-vs-id", "spectral", "limiting-amplitude")
OUT_ENV = "EMMVISCOWAVE_OUT"

# blocks each kind needs
REQUIRED = {
    "identities": (),
    "decay": ("mesh", "material", "time"),
    "ad-vs-id": ("mesh", "material", "time"),
    "spectral": ("mesh", "material"),
    "limiting-amplitude": ("mesh", "material", "time", "frequency"),
}

# kind-specific options and their defaults
OPTION_DEFAULTS = {
    "identities": {"trials": 1000},
    "decay": {"n_seeds": 5, "fit_window": 0.5, "refine_check": False},
    "ad-vs-id": {"levels": 4},
    "spectral": {"lambdas": [0.1, 0.5, 1.0, 2.0, 10.0], "stationary": True},
    "limiting-amplitude": {"forcing_amplitude": [1.0, 0.5], "forcing_wavenumber": 1.0,
                           "fit_window": 0.5, "harmonic_check": True,
                           "harmonic_dt": 2.5e-4, "harmonic_T": 5.0, "every": 10},
}


class ConfigError(ValueError):
    """Invalid scenario; ``path`` is the dotted key that failed."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


@dataclass
class MeshSpec:
    nx: int = 8
    ny: int = 8
    labels: dict = field(default_factory=lambda: {"left": DIRICHLET})
    file: str = None

    def build(self, base_dir=None):
        if self.file is not None:
            p = Path(self.file)
            if base_dir is not None and not p.is_absolute():
                p = Path(base_dir) / p
            return load_mesh(p)
        return rect_mesh(self.nx, self.ny, self.labels)

    def to_dict(self):
        if self.file is not None:
            return {"file": self.file}
        return {"nx": self.nx, "ny": self.ny, "labels": dict(sorted(self.labels.items()))}


@dataclass
class BranchSpec:
    C: list
    eta: float = float("inf")
    degenerate: bool = False

    def build(self):
        return MaxwellBranch(np.array(self.C, dtype=float), self.eta, self.degenerate)

    def to_dict(self):
        d = {"C": [list(map(float, row)) for row in self.C], "degenerate": self.degenerate}
        if not self.degenerate:
            d["eta"] = self.eta
        return d


@dataclass
class MaterialSpec:
    rho: float
    branches: list

    def build(self):
        return EmmMaterial(self.rho, [b.build() for b in self.branches])

    def to_dict(self):
        return {"rho": self.rho, "branches": [b.to_dict() for b in self.branches]}


@dataclass
class TimeSpec:
    dt: float
    T: float
    t0: float = 0.0

    def to_dict(self):
        return {"dt": self.dt, "T": self.T, "t0": self.t0}


@dataclass
class FrequencySpec:
    kappa: list = field(default_factory=lambda: [1.0])
    sigma: float = 0.0
    mu: float = 0.0

    def to_dict(self):
        return {"kappa": list(self.kappa), "sigma": self.sigma, "mu": self.mu}


@dataclass
class Scenario:
    kind: str
    name: str = ""
    seed: int = 0
    mesh: MeshSpec = None
    material: MaterialSpec = None
    time: TimeSpec = None
    frequency: FrequencySpec = None
    options: dict = field(default_factory=dict)
    output_dir: str = None
    base_dir: str = None

    def to_dict(self):
        """Canonical form; parsing it again gives an equal scenario."""
        d = {"kind": self.kind, "name": self.name, "seed": self.seed}
        if self.output_dir is not None:
            d["output_dir"] = self.output_dir
        for key in ("mesh", "material", "time", "frequency"):
            block = getattr(self, key)
            if block is not None:
                d[key] = block.to_dict()
        d["options"] = dict(sorted(self.options.items()))
        return d

    def to_toml(self):
        return tomli_w.dumps(self.to_dict())

    def config_hash(self):
        """sha256 of the canonical form without the output location."""
        d = self.to_dict()
        d.pop("output_dir", None)
        return hashlib.sha256(tomli_w.dumps(d).encode("utf-8")).hexdigest()

    def resolve_output(self, override=None):
        """Directory for this scenario's artifacts.

        Precedence: ``override`` (command line), then the environment
        variable, then ``output_dir`` (relative to the config file), then
        ``./out``. A subdirectory named after the scenario is appended.
        """
        if override:
            out = Path(override)
        elif os.environ.get(OUT_ENV):
            out = Path(os.environ[OUT_ENV])
        elif self.output_dir is not None:
            out = Path(self.output_dir)
            if self.base_dir is not None and not out.is_absolute():
                out = Path(self.base_dir) / out
        else:
            out = Path("out")
        return out / (self.name or self.kind)

    def build_mesh(self):
        return self.mesh.build(self.base_dir)


# ---- validation helpers -----------------------------------------------------

def _number(d, key, path, default=None, positive=False, nonneg=False):
    if key not in d:
        if default is None:
            raise ConfigError(f"{path}.{key}", "required")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}.{key}", f"expected a number, got {v!r}")
    v = float(v)
    if not np.isfinite(v) and not (key == "eta" and v == np.inf):
        raise ConfigError(f"{path}.{key}", "must be finite")
    if positive and not v > 0:
        raise ConfigError(f"{path}.{key}", f"must be > 0, got {v}")
    if nonneg and v < 0:
        raise ConfigError(f"{path}.{key}", f"must be >= 0, got {v}")
    return v


def _int(d, key, path, default, minimum=1):
    v = d.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{path}.{key}", f"expected an integer, got {v!r}")
    if v < minimum:
        raise ConfigError(f"{path}.{key}", f"must be >= {minimum}")
    return v


def _table(d, key, path):
    v = d.get(key)
    if v is None:
        return None
    if not isinstance(v, dict):
        raise ConfigError(f"{path}{key}", "expected a table")
    return v


def _unknown(d, allowed, path):
    extra = sorted(set(d) - set(allowed))
    if extra:
        raise ConfigError(f"{path}.{extra[0]}" if path else extra[0], "unknown key")


def _parse_mesh(d):
    _unknown(d, ("nx", "ny", "labels", "file"), "mesh")
    if "file" in d:
        if set(d) - {"file"}:
            raise ConfigError("mesh", "give either 'file' or an inline rectangle, not both")
        if not isinstance(d["file"], str):
            raise ConfigError("mesh.file", "expected a path string")
        return MeshSpec(file=d["file"])
    labels = d.get("labels", {"left": DIRICHLET})
    if not isinstance(labels, dict):
        raise ConfigError("mesh.labels", "expected a table side = 'D'|'N'")
    for side, lab in labels.items():
        if side not in SIDES:
            raise ConfigError(f"mesh.labels.{side}", f"unknown side; use one of {', '.join(SIDES)}")
        if lab not in (DIRICHLET, NEUMANN):
            raise ConfigError(f"mesh.labels.{side}", f"label must be 'D' or 'N', got {lab!r}")
    if DIRICHLET not in labels.values():
        raise ConfigError("mesh.labels", "the Dirichlet boundary part Gamma_D must be nonempty "
                          "(at least one side labelled 'D')")
    full = {s: labels.get(s, NEUMANN) for s in SIDES}
    return MeshSpec(_int(d, "nx", "mesh", 8), _int(d, "ny", "mesh", 8), full)


def _parse_branch(b, path):
    if not isinstance(b, dict):
        raise ConfigError(path, "expected a table")
    _unknown(b, ("C", "lame", "eta", "degenerate"), path)
    degenerate = b.get("degenerate", False)
    if not isinstance(degenerate, bool):
        raise ConfigError(f"{path}.degenerate", "expected true or false")
    if ("C" in b) == ("lame" in b):
        raise ConfigError(path, "give exactly one of 'C' (3x3 Kelvin matrix) or 'lame' = [lambda, mu]")
    if "lame" in b:
        lame = b["lame"]
        if not (isinstance(lame, list) and len(lame) == 2 and all(isinstance(x, (int, float)) for x in lame)):
            raise ConfigError(f"{path}.lame", "expected [lambda, mu]")
        C = isotropic(float(lame[0]), float(lame[1]))
    else:
        try:
            C = np.array(b["C"], dtype=float)
        except (TypeError, ValueError):
            raise ConfigError(f"{path}.C", "expected a 3x3 array of numbers") from None
        if C.shape != (3, 3):
            raise ConfigError(f"{path}.C", f"expected shape (3, 3), got {C.shape}")
    if degenerate:
        if "eta" in b:
            raise ConfigError(f"{path}.eta", "a degenerate (elastic) branch takes no viscosity")
        eta = float("inf")
    else:
        eta = _number(b, "eta", path, positive=True)
        if not np.isfinite(eta):
            raise ConfigError(f"{path}.eta", "must be finite for a viscous branch")
    spec = BranchSpec(C.tolist(), eta, degenerate)
    try:
        spec.build()
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None
    return spec


def _parse_material(d):
    _unknown(d, ("rho", "branches"), "material")
    rho = _number(d, "rho", "material", positive=True)
    br = d.get("branches")
    if not isinstance(br, list) or not br:
        raise ConfigError("material.branches", "at least one [[material.branches]] entry is required")
    spec = MaterialSpec(rho, [_parse_branch(b, f"material.branches[{k}]") for k, b in enumerate(br)])
    try:
        spec.build()
    except ValueError as exc:
        raise ConfigError("material", str(exc)) from None
    return spec


def _parse_time(d, need_t0):
    _unknown(d, ("dt", "T", "t0"), "time")
    dt = _number(d, "dt", "time", positive=True)
    T = _number(d, "T", "time", positive=True)
    t0 = _number(d, "t0", "time", default=0.0, nonneg=True)
    if not T > t0:
        raise ConfigError("time.T", f"must exceed t0 = {t0}")
    if dt > T:
        raise ConfigError("time.dt", "must not exceed T")
    if need_t0 and not t0 > 0:
        raise ConfigError("time.t0", "the ramp time must be > 0 for limiting-amplitude runs")
    return TimeSpec(dt, T, t0)


def _parse_frequency(d, need_kappa):
    _unknown(d, ("kappa", "sigma", "mu"), "frequency")
    kappa = d.get("kappa", [1.0])
    if isinstance(kappa, (int, float)) and not isinstance(kappa, bool):
        kappa = [kappa]
    if not isinstance(kappa, list) or not kappa or not all(
            isinstance(k, (int, float)) and not isinstance(k, bool) for k in kappa):
        raise ConfigError("frequency.kappa", "expected a number or a nonempty list of numbers")
    kappa = [float(k) for k in kappa]
    if need_kappa and any(not k > 0 for k in kappa):
        raise ConfigError("frequency.kappa", "every kappa must be > 0")
    return FrequencySpec(kappa, _number(d, "sigma", "frequency", 0.0), _number(d, "mu", "frequency", 0.0))


def _parse_options(kind, d):
    defaults = OPTION_DEFAULTS[kind]
    d = {} if d is None else d
    _unknown(d, defaults, "options")
    out = {}
    for key, dflt in defaults.items():
        v = d.get(key, dflt)
        path = f"options.{key}"
        if isinstance(dflt, bool):
            if not isinstance(v, bool):
                raise ConfigError(path, "expected true or false")
        elif isinstance(dflt, int):
            v = _int(d, key, "options", dflt)
        elif isinstance(dflt, float):
            v = _number(d, key, "options", dflt, positive=True)
        elif isinstance(dflt, list):
            if not isinstance(v, list) or not v or not all(
                    isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
                raise ConfigError(path, "expected a nonempty list of numbers")
            v = [float(x) for x in v]
        out[key] = v
    if kind == "decay" and not 0 < out["fit_window"] <= 1:
        raise ConfigError("options.fit_window", "must be in (0, 1]")
    if kind == "limiting-amplitude":
        if not 0 < out["fit_window"] <= 1:
            raise ConfigError("options.fit_window", "must be in (0, 1]")
        if len(out["forcing_amplitude"]) != 2:
            raise ConfigError("options.forcing_amplitude", "expected two components")
    if kind == "spectral" and any(not x > 0 for x in out["lambdas"]):
        raise ConfigError("options.lambdas", "probe points must be > 0")
    return out


def parse_scenario(d, base_dir=None, where=""):
    """Validate one scenario table and return a :class:`Scenario`."""
    try:
        return _parse_scenario(d, base_dir)
    except ConfigError as exc:
        if not where:
            raise
        msg = str(exc)[len(exc.path) + 2:] if exc.path else str(exc)
        raise ConfigError(f"{where}.{exc.path}" if exc.path else where, msg) from None


def _parse_scenario(d, base_dir):
    if not isinstance(d, dict):
        raise ConfigError("", "expected a table")
    _unknown(d, ("kind", "name", "seed", "mesh", "material", "time", "frequency", "options", "output_dir"), "")
    kind = d.get("kind")
    if kind not in KINDS:
        raise ConfigError("kind", f"must be one of {', '.join(KINDS)}, got {kind!r}")
    name = d.get("name", "")
    if not isinstance(name, str):
        raise ConfigError("name", "expected a string")
    seed = d.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed", f"expected a non-negative integer, got {seed!r}")
    for block in REQUIRED[kind]:
        if block not in d:
            raise ConfigError(block, f"required for kind {kind!r}")
    sc = Scenario(kind, name, seed, base_dir=None if base_dir is None else str(base_dir))
    if "mesh" in d:
        sc.mesh = _parse_mesh(_table(d, "mesh", ""))
    if "material" in d:
        sc.material = _parse_material(_table(d, "material", ""))
    if "time" in d:
        sc.time = _parse_time(_table(d, "time", ""), kind == "limiting-amplitude")
    if "frequency" in d:
        sc.frequency = _parse_frequency(_table(d, "frequency", ""), kind == "limiting-amplitude")
    sc.options = _parse_options(kind, _table(d, "options", ""))
    if "output_dir" in d:
        if not isinstance(d["output_dir"], str):
            raise ConfigError("output_dir", "expected a path string")
        sc.output_dir = d["output_dir"]
    if sc.mesh is not None and sc.mesh.file is not None:
        try:
            sc.build_mesh()
        except (OSError, MeshError) as exc:
            raise ConfigError("mesh.file", str(exc)) from None
    return sc


def loads(text, base_dir=None):
    """Parse TOML text into a list of scenarios."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("", f"TOML syntax error: {exc}") from None
    if "scenario" in data:
        if set(data) - {"scenario"}:
            raise ConfigError("", "use either top-level keys or [[scenario]] tables, not both")
        items = data["scenario"]
        if not isinstance(items, list) or not items:
            raise ConfigError("scenario", "expected a nonempty array of tables")
        return [parse_scenario(s, base_dir, f"scenario[{k}]") for k, s in enumerate(items)]
    return [parse_scenario(data, base_dir)]


def load(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("", f"cannot read {path}: {exc.strerror}") from None
    return loads(text, path.parent)
