"""Experiment configuration: a YAML file with a strict schema.

Example::

    experiments:
      - id: uniform-mean
        space: {kind: bounded_uniform, m1: 0, m2: 1}
        functional: "int(x; 0, 1)"
        n_list: [16, 64, 256]
        N: 20000
        seed: 1
        checks: [mean, variance_decay]

A composite functional is written as a mapping::

        functional:
          h: "sin(y1)"
          atoms: ["int(x^2; 0, 1)"]
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .errors import FuncMeanError, ParseError
from .functionals import parse_functional
from .spaces import (
    Ball2,
    BoundedUniform,
    CauchySpace,
    Codim1,
    Codim2,
    DerivConstrained,
    IidDensity,
    LayerSimplex,
    WienerSpace,
)

CHECKS = ("mean", "variance_decay", "ks", "exchange_gap", "divergence", "cf")


class ConfigError(FuncMeanError):
    """The configuration file is unreadable or violates the schema."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class BoundedUniformSpec(_Strict):
    kind: Literal["bounded_uniform"]
    m1: float = 0.0
    m2: float = 1.0

    def build(self):
        return BoundedUniform(self.m1, self.m2)


class IidDensitySpec(_Strict):
    kind: Literal["iid_density"]
    dist: Literal["gaussian", "cauchy", "uniform"]
    mu: float = 0.0
    sigma: float = 1.0
    lo: float = 0.0
    hi: float = 1.0

    def build(self):
        return IidDensity(self.dist, self.mu, self.sigma, self.lo, self.hi)


class LayerSimplexSpec(_Strict):
    kind: Literal["layer_simplex"]

    def build(self):
        return LayerSimplex()


class DerivConstrainedSpec(_Strict):
    kind: Literal["deriv_constrained"]

    def build(self):
        return DerivConstrained()


class Codim1Spec(_Strict):
    kind: Literal["codim1"]
    a: str
    s: float

    def build(self):
        return Codim1(self.a, self.s)


class Codim2Spec(_Strict):
    kind: Literal["codim2"]
    a: str
    b: str
    r: float
    s: float

    def build(self):
        return Codim2(self.a, self.b, self.r, self.s)


class Ball2Spec(_Strict):
    kind: Literal["ball2"]
    R: float = 1.0

    def build(self):
        return Ball2(self.R)


class CauchySpec(_Strict):
    kind: Literal["cauchy"]

    def build(self):
        return CauchySpace()


class WienerSpec(_Strict):
    kind: Literal["wiener"]

    def build(self):
        return WienerSpace()


SpaceSpec = Annotated[
    Union[
        BoundedUniformSpec,
        IidDensitySpec,
        LayerSimplexSpec,
        DerivConstrainedSpec,
        Codim1Spec,
        Codim2Spec,
        Ball2Spec,
        CauchySpec,
        WienerSpec,
    ],
    Field(discriminator="kind"),
]


class CompositeSpec(_Strict):
    h: str
    atoms: list[str] = Field(min_length=1)


class PlanSpec(_Strict):
    id: str = Field(min_length=1)
    space: SpaceSpec
    functional: Union[str, CompositeSpec]
    n_list: list[Annotated[int, Field(ge=2)]] = Field(min_length=1)
    N: int = Field(ge=100)
    seed: int = Field(ge=0, lt=2**64)
    checks: list[Literal["mean", "variance_decay", "ks", "exchange_gap", "divergence", "cf"]] = Field(min_length=1)
    events: list[tuple[float, float]] = Field(default_factory=list)
    ks_t: Optional[float] = None
    cf_t: float = 1.0


class ConfigFile(_Strict):
    experiments: list[PlanSpec] = Field(min_length=1)

    @field_validator("experiments")
    @classmethod
    def _unique_ids(cls, plans):
        seen = set()
        for p in plans:
            if p.id in seen:
                raise ValueError(f"duplicate experiment id {p.id!r}")
            seen.add(p.id)
        return plans


@dataclass(frozen=True)
class ExperimentPlan:
    id: str
    space: object
    functional: object
    n_list: tuple[int, ...]
    N: int
    seed: int
    checks: tuple[str, ...]
    events: tuple[tuple[float, float], ...] = ()
    ks_t: float | None = None
    cf_t: float = 1.0


def _format_validation(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        path = ".".join(str(p) for p in e["loc"])
        lines.append(f"{path or '<root>'}: {e['msg']}")
    return "; ".join(lines)


def load_plans(data: dict) -> list[ExperimentPlan]:
    """Validate an already-parsed mapping and build plans."""
    try:
        cfg = ConfigFile.model_validate(data)
    except ValidationError as e:
        raise ConfigError(_format_validation(e)) from None
    plans = []
    for i, p in enumerate(cfg.experiments):
        where = f"experiments.{i}"
        try:
            space = p.space.build()
        except (ParseError, FuncMeanError, ValueError) as e:
            raise ConfigError(f"{where}.space: {e}") from None
        raw = p.functional if isinstance(p.functional, str) else p.functional.model_dump()
        try:
            functional = parse_functional(raw)
        except (ParseError, FuncMeanError, ValueError) as e:
            raise ConfigError(f"{where}.functional: {e}") from None
        plans.append(
            ExperimentPlan(
                p.id,
                space,
                functional,
                tuple(p.n_list),
                p.N,
                p.seed,
                tuple(dict.fromkeys(p.checks)),
                tuple(p.events),
                p.ks_t,
                p.cf_t,
            )
        )
    return plans


def parse_config(path) -> list[ExperimentPlan]:
    """Read a YAML experiment file.

    Raises:
        ConfigError: unreadable file, YAML syntax error, schema violation
            (with the dotted path of the offending key) or a bad expression.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"YAML syntax error: {e}") from None
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping with an 'experiments' list")
    return load_plans(data)
