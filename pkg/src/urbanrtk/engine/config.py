from __future__ import annotations

import math
from dataclasses import dataclass, fields


@dataclass(frozen=True)
class EngineConfig:
    """Positioning engine configuration; defaults are the urban baseline setup."""

    cn0_min: float = 37.5
    s_theta_min: float = 0.5
    elev_min: float = 15.0
    nis_threshold: float = 2.0
    exclusion_depth: int = 8
    float_exclusion_m: int = 1
    min_dd_fix: int = 4
    fix_residual_alpha: float = 0.0  # optional chi-square gate on the best ILS cost; 0 disables
    sigma_rho: float = 0.9
    sigma_phi: float = 0.004
    q_h: float = 0.4
    q_v: float = 0.06
    p_bar_f: float = 0.001
    score_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    age_of_data_max: float = 1.5
    elevation_weighting: bool = True
    sigma_ambiguity0: float = 1e4
    init_sigma_pos: float = 100.0
    init_sigma_vel: float = 10.0
    aperture_mode: str = "cached"
    aperture_trials: int = 10_000
    aperture_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "score_weights", tuple(float(w) for w in self.score_weights))
        self.validate()

    def validate(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, float) and not math.isfinite(v):
                raise ValueError(f"{f.name} must be finite, got {v}")
        positive = ("sigma_rho", "sigma_phi", "q_h", "q_v", "nis_threshold",
                    "sigma_ambiguity0", "init_sigma_pos", "init_sigma_vel", "age_of_data_max")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.cn0_min < 0:
            raise ValueError(f"cn0_min must be non-negative, got {self.cn0_min}")
        if not -1.0 <= self.s_theta_min <= 1.0:
            raise ValueError(f"s_theta_min must lie in [-1, 1], got {self.s_theta_min}")
        if not 0.0 <= self.elev_min <= 90.0:
            raise ValueError(f"elev_min must lie in [0, 90], got {self.elev_min}")
        if self.exclusion_depth < 0:
            raise ValueError(f"exclusion_depth must be >= 0, got {self.exclusion_depth}")
        if self.min_dd_fix < 1:
            raise ValueError(f"min_dd_fix must be >= 1, got {self.min_dd_fix}")
        if not 0.0 <= self.fix_residual_alpha < 1.0:
            raise ValueError(f"fix_residual_alpha must lie in [0, 1), got {self.fix_residual_alpha}")
        if self.float_exclusion_m not in (1, 2):
            raise ValueError(f"float_exclusion_m must be 1 or 2, got {self.float_exclusion_m}")
        if not 0.0 < self.p_bar_f < 1.0:
            raise ValueError(f"p_bar_f must lie in (0, 1), got {self.p_bar_f}")
        if len(self.score_weights) != 3 or any(w < 0 for w in self.score_weights):
            raise ValueError(f"score_weights must be three non-negative numbers, got {self.score_weights}")
        if self.aperture_mode not in ("cached", "exact"):
            raise ValueError(f"aperture_mode must be 'cached' or 'exact', got {self.aperture_mode!r}")
        if self.aperture_trials < math.ceil(10.0 / self.p_bar_f - 1e-9):
            raise ValueError(f"aperture_trials must be at least 10/p_bar_f, got {self.aperture_trials}")
