"""Secrecy-rate maximization for an RIS-aided MISO downlink with hardware impairments."""

from .config import (
    FadingParams,
    Geometry,
    HardwareProfile,
    IDEAL_HARDWARE,
    NoiseConfig,
    SolverOptions,
    SystemConfig,
    dbm_to_watt,
    watt_to_dbm,
)
from .channel import ChannelSet, build_scenario, normalize_to_unit_noise
from .metrics import equivalent_channels, mc_rate_oracle, rate_difference, secrecy_rate

__all__ = [
    "ChannelSet",
    "FadingParams",
    "Geometry",
    "HardwareProfile",
    "IDEAL_HARDWARE",
    "NoiseConfig",
    "SolverOptions",
    "SystemConfig",
    "build_scenario",
    "dbm_to_watt",
    "equivalent_channels",
    "mc_rate_oracle",
    "normalize_to_unit_noise",
    "rate_difference",
    "secrecy_rate",
    "watt_to_dbm",
]
