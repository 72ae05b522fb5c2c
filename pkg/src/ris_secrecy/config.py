"""Scenario configuration: geometry, fading, impairments, powers, solver knobs."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np


def dbm_to_watt(p_dbm: float) -> float:
    return 10.0 ** ((p_dbm - 30.0) / 10.0)


def watt_to_dbm(p_watt: float) -> float:
    if p_watt <= 0:
        raise ValueError("power must be positive to express in dBm")
    return 10.0 * np.log10(p_watt) + 30.0


@dataclass(frozen=True)
class Geometry:
    """2-D node positions in meters."""

    bs_pos: tuple[float, float] = (0.0, 0.0)
    ris_pos: tuple[float, float] = (50.0, 0.0)
    user_pos: tuple[float, float] = (50.0, 2.0)
    eve_pos: tuple[float, float] = (45.0, 2.0)

    def __post_init__(self):
        pts = [self.bs_pos, self.ris_pos, self.user_pos, self.eve_pos]
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                if distance(pts[i], pts[j]) <= 0.0:
                    raise ValueError("all pairwise distances must be strictly positive")


def distance(a: tuple[float, float], b: tuple[float, float]) -> float:
    return float(np.hypot(a[0] - b[0], a[1] - b[1]))


@dataclass(frozen=True)
class FadingParams:
    """Rician K-factors and path-loss exponents, split by link class.

    RIS-related links (BS-RIS, RIS-user, RIS-eve) share one (K, alpha) pair;
    the direct BS-user / BS-eve links share the other.
    """

    ricean_k_ris: float = 10.0
    ricean_k_direct: float = 0.0
    alpha_ris: float = 2.2
    alpha_direct: float = 3.6

    def __post_init__(self):
        if self.ricean_k_ris < 0 or self.ricean_k_direct < 0:
            raise ValueError("Rician K-factors must be >= 0")
        if self.alpha_ris <= 0 or self.alpha_direct <= 0:
            raise ValueError("path-loss exponents must be positive")


@dataclass(frozen=True)
class HardwareProfile:
    """Transceiver distortion ratios: transmit-side mu_t, receive-side mu_r."""

    mu_t: float = 0.0
    mu_r: float = 0.0

    def __post_init__(self):
        if self.mu_t < 0 or self.mu_r < 0:
            raise ValueError("distortion ratios must be >= 0")

    @property
    def ideal(self) -> bool:
        return self.mu_t == 0.0 and self.mu_r == 0.0


IDEAL_HARDWARE = HardwareProfile(0.0, 0.0)


@dataclass(frozen=True)
class NoiseConfig:
    """Thermal noise powers in watts at the user and the eavesdropper."""

    sigma2_u: float = dbm_to_watt(-80.0)
    sigma2_e: float = dbm_to_watt(-80.0)

    def __post_init__(self):
        if self.sigma2_u <= 0 or self.sigma2_e <= 0:
            raise ValueError("noise powers must be positive")


@dataclass(frozen=True)
class SolverOptions:
    """Alternating-optimization and conic-solver controls.

    Each outer iteration refines its subproblem with a short inner loop of
    re-linearized solves; a single tangent move per outer iteration leaves a
    slowly crawling tail that misses the stopping threshold for many extra
    iterations.
    """

    ao_eps: float = 1e-4            # bits/s/Hz stopping threshold
    ao_max_iters: int = 50
    inner_f_max: int = 20           # SCA re-linearizations per beamformer update
    inner_e_max: int = 4            # SDR re-linearizations per reflect update
    inner_eps: float | None = None  # inner stop; defaults to ao_eps / 4
    randomization_count: int = 200
    solver_tol: float = 1e-6        # KKT acceptance gate per subproblem
    random_phase_init: bool = False  # default reflect init is all-ones

    @property
    def inner_eps_value(self) -> float:
        return self.ao_eps / 4.0 if self.inner_eps is None else self.inner_eps


@dataclass(frozen=True)
class SystemConfig:
    """Full scenario description for one optimization instance."""

    n_bs_antennas: int = 4
    n_ris_elements: int = 32
    geometry: Geometry = field(default_factory=Geometry)
    fading: FadingParams = field(default_factory=FadingParams)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    hardware: HardwareProfile = field(default_factory=HardwareProfile)
    p_max_dbm: float = 30.0
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if self.n_bs_antennas < 1:
            raise ValueError("need at least one BS antenna")
        if self.n_ris_elements < 0:
            raise ValueError("RIS element count must be >= 0")

    @property
    def p_max_watt(self) -> float:
        return dbm_to_watt(self.p_max_dbm)

    def with_(self, **kwargs) -> "SystemConfig":
        return replace(self, **kwargs)
