"""Settings for day-long rolling-horizon simulations."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

from gridtwin.errors import ValidationError
from gridtwin.market_clearing import LAC_STEP_MINUTES, Penalties
from gridtwin.stochastic import RiskConfig

DAY_MINUTES = 1440


@dataclass(frozen=True)
class PipelineConfig:
    """Stage budgets (minutes), cadences, gaps and penalty prices.

    Budgets are passed to the solvers as time limits; a stage that hits its
    limit keeps its best incumbent.
    """

    da_budget: float = 20.0
    frac_budget: float = 40.0
    lac_budget: float = 10.0
    sced_budget: float = 2.0
    lac_cadence: int = 15
    lac_window_hours: int = 3
    sced_cadence: int = 5
    lad_enabled: bool = False
    lad_horizon: int = 12
    mip_gap: float = 1e-3
    lac_gap: float = 1e-2
    backend: str = "auto"
    forecast_noise: float = 0.0  # relative std of the look-ahead forecast; 0 = perfect foresight
    seed: int = 0
    penalties: Penalties = field(default_factory=Penalties)
    risk: RiskConfig = field(default_factory=RiskConfig)

    def __post_init__(self):
        for name in ("da_budget", "frac_budget", "lac_budget", "sced_budget"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValidationError(f"{name} must be a positive number of minutes")
        for name in ("lac_cadence", "sced_cadence"):
            v = getattr(self, name)
            if v <= 0 or DAY_MINUTES % v:
                raise ValidationError(f"{name}={v} does not divide the day")
        if self.lac_cadence % LAC_STEP_MINUTES:
            raise ValidationError(f"lac_cadence must be a multiple of {LAC_STEP_MINUTES} minutes")
        if LAC_STEP_MINUTES % self.sced_cadence:
            raise ValidationError(f"sced_cadence must divide {LAC_STEP_MINUTES} minutes")
        if self.lac_window_hours < 1 or self.lad_horizon < 1:
            raise ValidationError("look-ahead horizons must be at least one step")
        if self.mip_gap < 0 or self.lac_gap < 0 or self.forecast_noise < 0:
            raise ValidationError("gaps and noise must be nonnegative")

    @property
    def intervals(self) -> int:
        return DAY_MINUTES // self.sced_cadence

    def seconds(self, stage: str) -> float:
        return 60.0 * getattr(self, f"{stage}_budget")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["penalties"] = self.penalties.to_dict()
        out["risk"] = self.risk.to_dict()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        kw = dict(data)
        try:
            if "penalties" in kw:
                kw["penalties"] = Penalties(**kw["penalties"])
            if "risk" in kw:
                risk = dict(kw["risk"])
                if risk.get("cost_threshold") is None:
                    risk.pop("cost_threshold", None)
                kw["risk"] = RiskConfig(**risk)
            return cls(**kw)
        except TypeError as exc:
            raise ValidationError(f"bad config: {exc}") from exc
