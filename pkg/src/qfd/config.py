"""Scenario configuration: strict TOML parsing and validation.

Unknown keys are rejected; physics parameters have no silent defaults
(numerical defaults such as dt are recorded in the run manifest when
applied).
"""

import os
import sys
from dataclasses import dataclass, field
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .grids import DIRICHLET, PERIODIC, Grid1D, Grid2D
from .manybody import SoftCoulomb
from .potentials import PotentialSpec

MODES = ("single", "twobody_full", "twobody_hartree", "reduced", "qfdft", "check")


class ConfigParseError(ValueError):
    """Unreadable or syntactically invalid configuration (exit code 2)."""


class ConfigValidationError(ValueError):
    """Well-formed configuration with invalid content (exit code 3)."""


_SCHEMA = {
    "mode": None,
    "output_dir": None,
    "seed": None,
    "suite": None,
    "grid": {"n", "x_min", "x_max", "dx", "boundary"},
    "grid2": {"n", "x_min", "x_max", "dx", "boundary"},
    "potential": {"kind", "omega", "center", "height", "width",
                  "center_x", "thickness", "slit_separation", "slit_width"},
    "potential2": {"kind", "omega", "center", "height", "width",
                   "center_x", "thickness", "slit_separation", "slit_width"},
    "interaction": {"kind", "lambda", "a"},
    "initial": {"family", "sigma", "center", "momentum", "n", "mode", "path"},
    "initial2": {"family", "sigma", "center", "momentum", "n", "mode", "path"},
    "twobody": {"symmetrize", "predictor_corrector"},
    "propagator": {"scheme", "dt", "t_final", "mass", "snapshot_stride",
                   "absorbing", "cap_strength", "cap_fraction"},
    "trajectories": {"n", "sampling", "dt", "store_stride"},
    "functional": {"xc", "hartree", "kernel_lambda", "kernel_a",
                   "n_orbitals", "mixing"},
}


@dataclass
class ScenarioConfig:
    mode: str
    output_dir: str
    raw: dict
    text: str
    seed: Optional[int] = None
    suite: Optional[str] = None

    def section(self, name, default=None):
        return self.raw.get(name, default)


def _fail(msg):
    raise ConfigValidationError(msg)


def _check_keys(raw):
    for key, value in raw.items():
        if key not in _SCHEMA:
            _fail(f"unknown configuration key {key!r}")
        allowed = _SCHEMA[key]
        if allowed is None:
            if isinstance(value, dict):
                _fail(f"key {key!r} must be a scalar")
            continue
        if not isinstance(value, dict):
            _fail(f"section [{key}] must be a table")
        for sub in value:
            if sub not in allowed:
                _fail(f"unknown key {key}.{sub!r}")


def _require(section, name, key, types, positive=False):
    if key not in section:
        _fail(f"missing required key {name}.{key}")
    v = section[key]
    if not isinstance(v, types) or isinstance(v, bool):
        _fail(f"{name}.{key} has invalid type {type(v).__name__}")
    if positive and not v > 0:
        _fail(f"{name}.{key} must be > 0, got {v}")
    return v


def load_config(path):
    try:
        with open(path, "rb") as fh:
            text = fh.read()
        raw = tomllib.loads(text.decode("utf-8"))
    except OSError as exc:
        raise ConfigParseError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigParseError(f"TOML syntax error in {path}: {exc}") from exc
    return parse_config(raw, text.decode("utf-8"))


def parse_config(raw, text=""):
    _check_keys(raw)
    mode = raw.get("mode")
    if mode not in MODES:
        _fail(f"mode must be one of {MODES}, got {mode!r}")
    if mode == "check":
        suite = raw.get("suite")
        if not isinstance(suite, str):
            _fail("check mode requires a 'suite' string")
        return ScenarioConfig(mode=mode, output_dir=raw.get("output_dir", "."),
                              raw=raw, text=text, suite=suite,
                              seed=raw.get("seed"))
    out = raw.get("output_dir")
    if not isinstance(out, str) or not out:
        _fail("output_dir is required")
    seed = raw.get("seed")
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int) or seed < 0):
        _fail(f"seed must be a non-negative integer, got {seed!r}")
    cfg = ScenarioConfig(mode=mode, output_dir=out, raw=raw, text=text, seed=seed)
    # eager validation: every builder runs once so bad values fail before compute
    build_grid(cfg)
    build_potential(cfg, "potential")
    build_initial_spec(cfg, "initial")
    build_propagator_numbers(cfg)
    if mode in ("twobody_full", "twobody_hartree", "reduced"):
        build_interaction(cfg)
        build_initial_spec(cfg, "initial2")
        sym = cfg.section("twobody", {}).get("symmetrize", "none")
        if sym not in ("none", "symmetric", "antisymmetric"):
            _fail(f"twobody.symmetrize must be none|symmetric|antisymmetric, got {sym!r}")
    if mode == "qfdft":
        build_functional_numbers(cfg)
    if cfg.section("trajectories") is not None:
        build_trajectory_numbers(cfg)
        if cfg.seed is None and cfg.section("trajectories").get("sampling", "inverse_cdf") == "inverse_cdf":
            _fail("trajectories with inverse_cdf sampling require a top-level seed")
    return cfg


def build_grid(cfg, name="grid"):
    sec = cfg.section(name)
    if sec is None:
        if name == "grid2":
            sec = cfg.section("grid")
        else:
            _fail("missing [grid] section")
    n = _require(sec, name, "n", int, positive=True)
    x_min = _require(sec, name, "x_min", (int, float))
    boundary = sec.get("boundary", PERIODIC)
    if boundary not in (PERIODIC, DIRICHLET):
        _fail(f"{name}.boundary must be periodic|dirichlet, got {boundary!r}")
    if ("dx" in sec) == ("x_max" in sec):
        _fail(f"{name} needs exactly one of dx or x_max")
    if "dx" in sec:
        dx = _require(sec, name, "dx", (int, float), positive=True)
    else:
        x_max = _require(sec, name, "x_max", (int, float))
        if not x_max > x_min:
            _fail(f"{name}.x_max must exceed x_min")
        dx = (x_max - x_min) / n
    try:
        return Grid1D(n, float(x_min), float(dx), boundary)
    except ValueError as exc:
        _fail(f"{name}: {exc}")


def build_grid2d(cfg):
    return Grid2D(build_grid(cfg, "grid"), build_grid(cfg, "grid2"))


def build_potential(cfg, name):
    sec = cfg.section(name)
    if sec is None:
        if name == "potential2":
            sec = cfg.section("potential")
        else:
            _fail("missing [potential] section")
    kind = sec.get("kind")
    if kind == "free":
        return PotentialSpec.free()
    if kind == "harmonic":
        omega = _require(sec, name, "omega", (int, float), positive=True)
        return PotentialSpec.harmonic(float(omega), float(sec.get("center", 0.0)))
    if kind == "gaussian_barrier":
        height = _require(sec, name, "height", (int, float))
        width = _require(sec, name, "width", (int, float), positive=True)
        return PotentialSpec.gaussian_barrier(float(height), float(width),
                                              float(sec.get("center", 0.0)))
    if kind == "double_slit_2d":
        return PotentialSpec.double_slit_2d(
            _require(sec, name, "height", (int, float)),
            float(sec.get("center_x", 0.0)),
            _require(sec, name, "thickness", (int, float), positive=True),
            _require(sec, name, "slit_separation", (int, float), positive=True),
            _require(sec, name, "slit_width", (int, float), positive=True))
    _fail(f"{name}.kind must be free|harmonic|gaussian_barrier|double_slit_2d, got {kind!r}")


def build_interaction(cfg):
    sec = cfg.section("interaction")
    if sec is None:
        return None
    kind = sec.get("kind")
    if kind == "none":
        return None
    if kind == "soft_coulomb":
        lam = _require(sec, "interaction", "lambda", (int, float))
        a = sec.get("a", 1.0)
        if not a > 0:
            _fail("interaction.a must be > 0")
        return SoftCoulomb(float(lam), float(a))
    _fail(f"interaction.kind must be none|soft_coulomb, got {kind!r}")


def build_initial_spec(cfg, name):
    sec = cfg.section(name)
    if sec is None:
        if name == "initial2":
            sec = cfg.section("initial")
        else:
            _fail("missing [initial] section")
    family = sec.get("family")
    if family == "gaussian":
        _require(sec, name, "sigma", (int, float), positive=True)
    elif family == "harmonic_eigenstate":
        nq = _require(sec, name, "n", int)
        if nq < 0:
            _fail(f"{name}.n must be >= 0")
    elif family == "plane_wave":
        _require(sec, name, "mode", int)
    elif family == "file":
        path = _require(sec, name, "path", str)
        if not os.path.exists(path):
            _fail(f"{name}.path does not exist: {path}")
    else:
        _fail(f"{name}.family must be gaussian|harmonic_eigenstate|plane_wave|file, "
              f"got {family!r}")
    return dict(sec)


def build_propagator_numbers(cfg):
    sec = cfg.section("propagator")
    if sec is None:
        _fail("missing [propagator] section")
    scheme = sec.get("scheme", "split_operator")
    if scheme not in ("split_operator", "crank_nicolson"):
        _fail(f"propagator.scheme must be split_operator|crank_nicolson, got {scheme!r}")
    t_final = _require(sec, "propagator", "t_final", (int, float), positive=True)
    if "dt" in sec:
        _require(sec, "propagator", "dt", (int, float), positive=True)
    mass = sec.get("mass", 1.0)
    if not mass > 0:
        _fail(f"propagator.mass must be > 0, got {mass}")
    stride = sec.get("snapshot_stride", 1)
    if not (isinstance(stride, int) and stride > 0):
        _fail(f"propagator.snapshot_stride must be a positive integer, got {stride!r}")
    return dict(sec, scheme=scheme, t_final=float(t_final), mass=float(mass),
                snapshot_stride=stride)


def build_trajectory_numbers(cfg):
    sec = cfg.section("trajectories")
    n = _require(sec, "trajectories", "n", int, positive=True)
    sampling = sec.get("sampling", "inverse_cdf")
    if sampling not in ("inverse_cdf", "uniform_grid"):
        _fail(f"trajectories.sampling must be inverse_cdf|uniform_grid, got {sampling!r}")
    if "dt" in sec:
        _require(sec, "trajectories", "dt", (int, float), positive=True)
    stride = sec.get("store_stride", 1)
    if not (isinstance(stride, int) and stride > 0):
        _fail(f"trajectories.store_stride must be a positive integer, got {stride!r}")
    return dict(sec, n=n, sampling=sampling, store_stride=stride)


def build_functional_numbers(cfg):
    sec = cfg.section("functional")
    if sec is None:
        _fail("qfdft mode requires a [functional] section")
    n_orb = _require(sec, "functional", "n_orbitals", int, positive=True)
    xc = sec.get("xc", "none")
    mixing = sec.get("mixing", 0.3)
    if not 0 < mixing <= 1:
        _fail(f"functional.mixing must be in (0, 1], got {mixing}")
    return dict(sec, n_orbitals=n_orb, xc=xc, mixing=float(mixing))
