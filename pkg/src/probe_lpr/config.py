"""Grid, blur and scoring hyper-parameters."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

from .errors import InvalidParameterError


@dataclass(frozen=True)
class PolarConfig:
    """Hyper-parameters of the polar descriptor.

    Defaults follow the fixed parameter set used for every experiment:
    40 rings, 60 sectors, 80 m range, 2 m translation uncertainty,
    1e-6 Bernoulli clamp and 0.5 m voxels.

    ``voxel=None`` disables downsampling. ``sigma_theta_cap=None`` resolves
    to ``S / 4`` sector cells.
    """

    R: int = 40
    S: int = 60
    R_max: float = 80.0
    sigma_t: float = 2.0
    eps_B: float = 1e-6
    eps_U: float = 1e-3
    voxel: float | None = 0.5
    height_offset: float = 2.0
    kernel_truncation: float = 4.0
    sigma_theta_cap: float | None = None
    density_adaptive: bool = True

    def __post_init__(self):
        if int(self.R) != self.R or self.R < 2:
            raise InvalidParameterError(f"R must be an integer >= 2, got {self.R}")
        if int(self.S) != self.S or self.S < 2:
            raise InvalidParameterError(f"S must be an integer >= 2, got {self.S}")
        if not self.R_max > 0:
            raise InvalidParameterError(f"R_max must be positive, got {self.R_max}")
        if not self.sigma_t >= 0 or not math.isfinite(self.sigma_t):
            raise InvalidParameterError(f"sigma_t must be >= 0, got {self.sigma_t}")
        if not 0 < self.eps_B < 0.5:
            raise InvalidParameterError(f"eps_B must lie in (0, 0.5), got {self.eps_B}")
        if not self.eps_U > 0:
            raise InvalidParameterError(f"eps_U must be positive, got {self.eps_U}")
        if self.voxel is not None and not self.voxel > 0:
            raise InvalidParameterError(f"voxel must be positive or None, got {self.voxel}")
        if not self.kernel_truncation > 0:
            raise InvalidParameterError("kernel_truncation must be positive")
        if self.sigma_theta_cap is None:
            object.__setattr__(self, "sigma_theta_cap", self.S / 4.0)
        elif not self.sigma_theta_cap > 0:
            raise InvalidParameterError("sigma_theta_cap must be positive")
        object.__setattr__(self, "R", int(self.R))
        object.__setattr__(self, "S", int(self.S))

    @property
    def delta_r(self) -> float:
        """Ring width in meters."""
        return self.R_max / self.R

    @property
    def delta_theta(self) -> float:
        """Sector width in radians."""
        return 2.0 * math.pi / self.S

    @property
    def sigma_r_cells(self) -> float:
        """Radial blur width in ring cells."""
        return self.sigma_t / self.delta_r

    def replace(self, **changes) -> "PolarConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PolarConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise InvalidParameterError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)
