"""TOML experiment configuration with line-anchored validation errors."""
from __future__ import annotations

import re
import sys
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .problems import COST, DRIFT, PARAMETRIC_INSTANCES, RELAXED_INSTANCES, SIGMA


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class RunConfig(_Section):
    seed: int = Field(0, ge=0, lt=2**64)
    out: str = "out"


class DriverConfig(_Section):
    kind: Literal["fbm", "test_path"] = "fbm"
    hurst: float = Field(0.7, gt=0.5, lt=1.0)
    horizon: float = Field(1.0, gt=0)
    n_steps: int = Field(1024, ge=16, le=2**16)
    path: Literal["power_beta", "sine", "weierstrass"] = "sine"
    params: dict[str, float] = Field(default_factory=dict)
    index_margin: float = Field(0.05, ge=0, lt=0.5)


class IntegrateConfig(_Section):
    integrand: Literal["one", "sin", "driver"] = "driver"
    alphas: int = Field(5, ge=1, le=50)


class SolveConfig(_Section):
    method: Literal["doss", "euler"] = "doss"
    sigma: str = "sine_diffusion"
    drift: str = "relax_to_control"
    x0: float = 0.5
    mode: Literal["rk4", "picard"] = "rk4"
    control: Literal["zero", "sine", "bang_bang"] = "sine"

    @field_validator("sigma")
    @classmethod
    def _sigma(cls, v):
        if v not in SIGMA:
            raise ValueError(f"unknown sigma {v!r}; known: {', '.join(sorted(SIGMA))}")
        return v

    @field_validator("drift")
    @classmethod
    def _drift(cls, v):
        if v not in DRIFT:
            raise ValueError(f"unknown drift {v!r}; known: {', '.join(sorted(DRIFT))}")
        return v


class ChatterConfig(_Section):
    atoms: list[float] = Field(default_factory=lambda: [0.0, 1.0], min_length=1)
    weights: list[list[float]] = Field(default_factory=lambda: [[0.5, 0.5]], min_length=1)
    levels: list[int] = Field(default_factory=lambda: [1, 2, 4, 8, 16], min_length=1)
    cost: Optional[str] = "atom_value"

    @field_validator("cost")
    @classmethod
    def _cost(cls, v):
        if v is not None and v not in COST:
            raise ValueError(f"unknown cost {v!r}; known: {', '.join(sorted(COST))}")
        return v


class OptimizeConfig(_Section):
    regime: Literal["relaxed", "parametric"] = "relaxed"
    instance: str = "convex_mix"
    method: Optional[str] = None
    chatter_level: int = Field(16, ge=0)


class VerifyConfig(_Section):
    seeds: list[int] = Field(default_factory=lambda: [0, 1, 2], min_length=1)
    criteria: list[int] = Field(default_factory=lambda: list(range(1, 12)))
    opt_steps: int = Field(1024, ge=64)
    mc_small: int = Field(1000, ge=10)
    mc_large: int = Field(10000, ge=10)
    mc_steps: int = Field(256, ge=16)


class ExperimentConfig(_Section):
    run: RunConfig = Field(default_factory=RunConfig)
    driver: DriverConfig = Field(default_factory=DriverConfig)
    integrate: IntegrateConfig = Field(default_factory=IntegrateConfig)
    solve: SolveConfig = Field(default_factory=SolveConfig)
    chatter: ChatterConfig = Field(default_factory=ChatterConfig)
    optimize: OptimizeConfig = Field(default_factory=OptimizeConfig)
    verify: VerifyConfig = Field(default_factory=VerifyConfig)


_METHODS = {"relaxed": ("projected_gradient", "exhaustive"), "parametric": ("nelder_mead", "grid")}


def _cross_checks(cfg: ExperimentConfig):
    """Compatibility rules between sections: yields ``(section, key, message)``."""
    if cfg.solve.method == "doss" and cfg.solve.sigma in SIGMA and SIGMA[cfg.solve.sigma]().arity != "sigma_tx":
        yield "solve", "sigma", f"sigma {cfg.solve.sigma!r} depends on the control; use method = \"euler\""
    table = RELAXED_INSTANCES if cfg.optimize.regime == "relaxed" else PARAMETRIC_INSTANCES
    if cfg.optimize.instance not in table:
        yield "optimize", "instance", (
            f"{cfg.optimize.instance!r} is not a {cfg.optimize.regime} instance; known: {', '.join(sorted(table))}"
        )
    if cfg.optimize.method is not None and cfg.optimize.method not in _METHODS[cfg.optimize.regime]:
        yield "optimize", "method", f"method must be one of {_METHODS[cfg.optimize.regime]}"
    if any(len(row) != len(cfg.chatter.atoms) for row in cfg.chatter.weights):
        yield "chatter", "weights", "every weight row needs one entry per atom"
    bad = [c for c in cfg.verify.criteria if not 1 <= c <= 11]
    if bad:
        yield "verify", "criteria", f"criteria must lie in 1..11, got {bad}"


def _locate(text: str, section: Optional[str], key: Optional[str]) -> Optional[int]:
    current = None
    section_line = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"^\[([A-Za-z0-9_.\-]+)\]", line)
        if m:
            current = m.group(1)
            if current == section and section_line is None:
                section_line = no
            continue
        if key is not None and current == section and re.match(rf"^{re.escape(key)}\s*=", line):
            return no
    return section_line


def parse_config(text: str) -> ExperimentConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        if line is None:
            m = re.search(r"line (\d+)", str(exc))
            line = int(m.group(1)) if m else None
        raise ConfigError(f"invalid TOML: {getattr(exc, 'msg', exc)}", line) from None
    try:
        cfg = ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        loc = [str(p) for p in err["loc"]]
        section = loc[0] if loc else None
        key = loc[1] if len(loc) > 1 else None
        line = _locate(text, section, key)
        raise ConfigError(f"[{'.'.join(loc)}] {err['msg']}", line) from None
    for section, key, msg in _cross_checks(cfg):
        raise ConfigError(f"[{section}.{key}] {msg}", _locate(text, section, key))
    return cfg


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc.strerror}") from None
    return parse_config(text)
