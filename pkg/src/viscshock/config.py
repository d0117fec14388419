"""Experiment configuration files.

A configuration is an INI file with flat ``key = value`` sections::

    [experiment]
    name = lax2x2
    kind = shock            ; or "constant"

    [model]
    name = quadratic2
    coupling = 0.25         ; any other key is passed to the model factory

    [perturbation]
    masses = 0.05, -0.03
    center = -3
    width = 3

    [grid]
    x_min = -80
    x_max = 300
    nx = 3801

    [run]
    T = 256

Optional sections are ``[endstates]`` (``u_minus``, ``u_plus`` or
``state``), ``[scheme]`` and ``[fit]``.
"""
from __future__ import annotations

import configparser
import hashlib
import inspect
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .models import REGISTRY, get_model

KINDS = ("shock", "constant")


def _floats(text: str) -> tuple:
    try:
        return tuple(float(s) for s in text.replace(",", " ").split())
    except ValueError:
        raise ConfigurationError(f"expected a list of numbers, got {text!r}") from None


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    kind: str
    model: str
    model_params: tuple = ()  # sorted (key, value) pairs
    u_minus: tuple | None = None
    u_plus: tuple | None = None
    state: tuple | None = None
    masses: tuple = ()
    center: float = 0.0
    width: float = 4.0
    jitter: float = 0.0
    x_min: float = -80.0
    x_max: float = 80.0
    nx: int = 1601
    integrator: str = "imex"
    cfl: float = 0.4
    flux_scheme: str = "central-ko"
    dissipation: float | None = None
    T: float = 256.0
    checkpoint_step: float = 0.5  # in log2 t
    t_fit_min: float = 16.0
    sobolev_t_min: float = 10.0
    profile_half_width: float = 40.0
    discrete_reference: bool = True
    source: str = field(default="", compare=False)

    @property
    def params(self) -> dict:
        return dict(self.model_params)

    def canonical(self) -> str:
        """Stable text form used for hashing and provenance."""
        d = asdict(self)
        d.pop("source")
        return "\n".join(f"{k} = {d[k]!r}" for k in sorted(d))

    def digest(self, seed: int | None = None) -> str:
        text = self.canonical() + f"\nseed = {seed!r}"
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def checkpoints(self) -> list:
        """Times ``2^(k * step)`` from 1 to ``T``, plus ``T``."""
        kmax = int(np.floor(np.log2(self.T) / self.checkpoint_step + 1e-9))
        ts = [float(2.0 ** (k * self.checkpoint_step)) for k in range(kmax + 1)]
        if ts[-1] < self.T * (1 - 1e-12):
            ts.append(float(self.T))
        return ts


def _get(sec, key, conv, default):
    if sec is None or key not in sec:
        return default
    raw = sec[key]
    try:
        if conv is bool:
            return sec.getboolean(key)
        return conv(raw)
    except ValueError:
        raise ConfigurationError(f"bad value {raw!r} for {key}") from None


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigurationError(f"cannot parse {source}: {exc}") from None
    for required in ("experiment", "model", "grid", "run"):
        if not cp.has_section(required):
            raise ConfigurationError(f"{source}: missing [{required}] section")
    sec = {s: cp[s] for s in cp.sections()}
    model = dict(sec["model"])
    if "name" not in model:
        raise ConfigurationError(f"{source}: [model] needs a name")
    mname = model.pop("name")
    try:
        params = tuple(sorted((k, float(v)) for k, v in model.items()))
    except ValueError:
        raise ConfigurationError(f"{source}: model parameters must be numbers") from None
    ends, pert, grid = sec.get("endstates"), sec.get("perturbation"), sec["grid"]
    scheme, run, fit = sec.get("scheme"), sec["run"], sec.get("fit")

    def vec(s, key):
        return _floats(s[key]) if s is not None and key in s else None

    cfg = ExperimentConfig(
        name=sec["experiment"].get("name", Path(source).stem),
        kind=sec["experiment"].get("kind", "shock"),
        model=mname,
        model_params=params,
        u_minus=vec(ends, "u_minus"),
        u_plus=vec(ends, "u_plus"),
        state=vec(ends, "state"),
        masses=vec(pert, "masses") or (),
        center=_get(pert, "center", float, 0.0),
        width=_get(pert, "width", float, 4.0),
        jitter=_get(pert, "jitter", float, 0.0),
        x_min=_get(grid, "x_min", float, -80.0),
        x_max=_get(grid, "x_max", float, 80.0),
        nx=_get(grid, "nx", int, 1601),
        integrator=_get(scheme, "integrator", str, "imex"),
        cfl=_get(scheme, "cfl", float, 0.4),
        flux_scheme=_get(scheme, "flux_scheme", str, "central-ko"),
        dissipation=_get(scheme, "dissipation", float, None),
        T=_get(run, "T", float, 256.0),
        checkpoint_step=_get(run, "checkpoint_step", float, 0.5),
        t_fit_min=_get(fit, "t_fit_min", float, 16.0),
        sobolev_t_min=_get(fit, "sobolev_t_min", float, 10.0),
        profile_half_width=_get(run, "profile_half_width", float, 40.0),
        discrete_reference=_get(run, "discrete_reference", bool, True),
        source=source,
    )
    validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        bundled = resources.files("viscshock") / "configs" / path.name
        if not bundled.is_file():
            raise ConfigurationError(f"no such config: {path}")
        return parse_config(bundled.read_text(), str(path.name))
    return parse_config(path.read_text(), str(path))


def bundled_configs() -> list:
    root = resources.files("viscshock") / "configs"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".cfg"))


def validate(cfg: ExperimentConfig) -> None:
    """Check a configuration against the model registry and basic sanity rules."""
    if cfg.model not in REGISTRY:
        raise ConfigurationError(f"unknown model {cfg.model!r}; known: {sorted(REGISTRY)}")
    factory = REGISTRY[cfg.model]
    accepted = inspect.signature(factory).parameters
    for key, _ in cfg.model_params:
        if key not in accepted:
            raise ConfigurationError(f"model {cfg.model!r} has no parameter {key!r}")
    model = get_model(cfg.model, **cfg.params)
    if cfg.kind not in KINDS:
        raise ConfigurationError(f"kind must be one of {KINDS}")
    for label, v in (("u_minus", cfg.u_minus), ("u_plus", cfg.u_plus), ("state", cfg.state),
                     ("masses", cfg.masses or None)):
        if v is not None and len(v) != model.n:
            raise ConfigurationError(f"{label} needs {model.n} components")
    if not cfg.masses:
        raise ConfigurationError("[perturbation] masses are required")
    if cfg.width <= 0:
        raise ConfigurationError("perturbation width must be positive")
    if not (cfg.x_min < cfg.center - cfg.width and cfg.center + cfg.width < cfg.x_max):
        raise ConfigurationError("perturbation support leaves the grid")
    if cfg.nx < 256:
        raise ConfigurationError("grids need at least 256 nodes")
    if cfg.T <= cfg.t_fit_min or cfg.checkpoint_step <= 0:
        raise ConfigurationError("T must exceed t_fit_min and the checkpoint step be positive")
    if cfg.integrator not in ("rk2", "imex"):
        raise ConfigurationError(f"unknown integrator {cfg.integrator!r}")
    if cfg.flux_scheme not in ("central-ko", "local-lax-friedrichs"):
        raise ConfigurationError(f"unknown flux scheme {cfg.flux_scheme!r}")
    if cfg.kind == "constant" and cfg.state is None and model.background is None:
        raise ConfigurationError(f"model {cfg.model!r} has no background state")
    if cfg.kind == "shock" and (cfg.u_minus or model.u_minus) is None:
        raise ConfigurationError(f"model {cfg.model!r} has no default endstates")
