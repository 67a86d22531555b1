"""Process-variation Monte Carlo and multi-year aging perturbations.

Both effects are static, per-die multiplicative factors on stage power: PV
is drawn once per trace (per chip or per stage), aging comes from a shipped
degradation table indexed by year and mitigation policy. Because both are
per-stage multiplicative, their composition commutes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy.stats import truncnorm

from .errors import ConfigError, DomainError
from .soc_power import N_STAGES, PowerTrace
from .seeding import rng_for

AGING_TABLE_ASSET = "aging_table.json"

AGING_YEARS = ("Y0", "Y1", "Y2", "Y5", "Y10")
AGING_POLICIES = ("none", "fast_core_age_first", "balanced")


@dataclass(frozen=True)
class PvSpec:
    """Static process-variation envelope for one Monte-Carlo trial."""

    range: float = 0.10  # +/- fractional envelope
    granularity: str = "per_stage"  # or "per_chip"
    distribution: str = "gaussian_3sigma"  # or "uniform"
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.range <= 0.10:
            raise ConfigError("PV range must lie in [0, 0.10]")
        if self.granularity not in ("per_chip", "per_stage"):
            raise ConfigError(f"unknown PV granularity {self.granularity!r}")
        if self.distribution not in ("gaussian_3sigma", "uniform"):
            raise ConfigError(f"unknown PV distribution {self.distribution!r}")


@dataclass(frozen=True)
class PvBoundary:
    """Spread of power samples under PV: anything outside is separable."""

    p_min: float
    p_max: float
    width: float


def pv_factors(pv: PvSpec, trial: int = 0) -> np.ndarray:
    """Draw the static multiplicative factors for one die/trial."""
    size = 1 if pv.granularity == "per_chip" else N_STAGES
    if pv.range == 0.0:
        return np.ones(size)
    rng = rng_for(pv.seed, "pv", pv.granularity, pv.distribution, trial)
    if pv.distribution == "uniform":
        draws = rng.uniform(1.0 - pv.range, 1.0 + pv.range, size=size)
    else:
        sigma = pv.range / 3.0
        draws = truncnorm.rvs(-3.0, 3.0, loc=1.0, scale=sigma, size=size, random_state=rng)
    return draws


def apply_pv(trace: PowerTrace, pv: PvSpec, trial: int = 0) -> PowerTrace:
    """Scale a trace by one static PV draw (PV is fixed per die, so the
    factor for a given stage is constant across all cycles)."""
    out = trace.copy()
    factors = pv_factors(pv, trial)
    out.stage_power = out.stage_power * factors[None, :]
    out.meta["pv"] = {"range": pv.range, "granularity": pv.granularity, "trial": trial}
    return out


def pv_boundary(samples: list[float] | np.ndarray) -> PvBoundary:
    arr = np.asarray(samples, dtype=np.float64)
    if arr.size == 0:
        raise DomainError("need at least one power sample")
    if np.any(arr <= 0):
        raise DomainError("power samples must be positive")
    p_min = float(arr.min())
    p_max = float(arr.max())
    return PvBoundary(p_min=p_min, p_max=p_max, width=abs(p_max) - abs(p_min))


DegradationTable = dict[str, dict[str, np.ndarray]]


def load_default_degradation_table() -> DegradationTable:
    text = resources.files("htscope.data").joinpath(AGING_TABLE_ASSET).read_text()
    raw = json.loads(text)
    table: DegradationTable = {}
    for policy, years in raw["policies"].items():
        table[policy] = {y: np.asarray(f, dtype=np.float64) for y, f in years.items()}
    return table


@dataclass
class AgingSpec:
    """Year and mitigation policy selecting a row of the degradation table."""

    year: str = "Y0"
    policy: str = "none"
    degradation_table: DegradationTable = field(default_factory=load_default_degradation_table)

    def __post_init__(self) -> None:
        if self.year not in AGING_YEARS:
            raise ConfigError(f"unknown aging year {self.year!r}")
        if self.policy not in AGING_POLICIES:
            raise ConfigError(f"unknown aging policy {self.policy!r}")

    def factors(self) -> np.ndarray:
        try:
            f = self.degradation_table[self.policy][self.year]
        except KeyError as exc:
            raise ConfigError(f"no degradation entry for ({self.year}, {self.policy})") from exc
        if f.shape != (N_STAGES,):
            raise ConfigError("degradation factors must be 7-vectors")
        return f


def apply_aging(trace: PowerTrace, aging: AgingSpec) -> PowerTrace:
    """Apply per-stage aging drift; Y0 is the identity for every policy."""
    factors = aging.factors()
    out = trace.copy()
    out.stage_power = out.stage_power * factors[None, :]
    out.meta["aging"] = {"year": aging.year, "policy": aging.policy}
    return out
