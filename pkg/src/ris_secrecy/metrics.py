"""Impairment-aware rate expressions and a sample-level Monte-Carlo oracle.

The analytic path evaluates the user / eavesdropper rates from the equivalent
channels and the distortion-noise powers; the Monte-Carlo path simulates the
actual transmit/receive signal chain symbol by symbol and estimates the same
quantities empirically, staying independent of the closed forms it validates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet
from .config import HardwareProfile, NoiseConfig

_LN2 = np.log(2.0)


@dataclass(frozen=True)
class EquivalentChannels:
    """Stacked reflect-plus-direct channels seen through the reflection vector.

    Row m (m < M) is the cascade through RIS element m; the last row is the
    conjugated direct channel, matching the convention that the reflection
    vector carries a fixed trailing 1.
    """

    G_U: np.ndarray
    G_E: np.ndarray


def equivalent_channels(ch: ChannelSet) -> EquivalentChannels:
    g_u = np.vstack([ch.h_RU.conj()[:, None] * ch.H_BR, ch.h_BU.conj()[None, :]])
    g_e = np.vstack([ch.h_RE.conj()[:, None] * ch.H_BR, ch.h_BE.conj()[None, :]])
    return EquivalentChannels(g_u, g_e)


def check_reflect_vector(e: np.ndarray, m: int | None = None, tol: float = 1e-9) -> None:
    """Validate unit modulus on every entry and an exact trailing 1."""
    e = np.asarray(e)
    if m is not None and e.shape != (m + 1,):
        raise ValueError(f"reflect vector must have length {m + 1}")
    if not np.allclose(np.abs(e), 1.0, atol=tol):
        raise ValueError("reflect vector entries must be unit modulus")
    if e[-1] != 1.0:
        raise ValueError("last reflect entry must equal 1 exactly")


def beamformer_power(f: np.ndarray) -> float:
    return float(np.real(np.vdot(f, f)))


def noise_power_user(f: np.ndarray, e: np.ndarray, g_u: np.ndarray,
                     hw: HardwareProfile, sigma2_u: float) -> float:
    """Total distortion-plus-thermal power at the user for the given (f, e).

    Equals e^H G_U (mu_r f f^H + (1+mu_r) mu_t ddiag(f f^H)) G_U^H e
    + (1+mu_r) sigma_u^2, where ddiag keeps only the diagonal.
    """
    g = e.conj() @ g_u                      # effective 1 x N channel
    gf = g @ f
    diag_term = np.sum(np.abs(g) ** 2 * np.abs(f) ** 2)
    val = hw.mu_r * np.abs(gf) ** 2 + (1.0 + hw.mu_r) * hw.mu_t * diag_term
    val = float(np.real(val)) + (1.0 + hw.mu_r) * sigma2_u
    if val < 0:
        raise ArithmeticError("negative noise power: Hermitian handling is broken")
    return val


def noise_power_eve(f: np.ndarray, e: np.ndarray, g_e: np.ndarray,
                    hw: HardwareProfile, sigma2_e: float) -> float:
    """Distortion-plus-thermal power at the eavesdropper (ideal RX hardware)."""
    g = e.conj() @ g_e
    val = hw.mu_t * float(np.sum(np.abs(g) ** 2 * np.abs(f) ** 2)) + sigma2_e
    if val < 0:
        raise ArithmeticError("negative noise power: Hermitian handling is broken")
    return val


def rate_user(f: np.ndarray, e: np.ndarray, g_u: np.ndarray,
              hw: HardwareProfile, sigma2_u: float) -> float:
    sig = np.abs(e.conj() @ g_u @ f) ** 2
    return float(np.log1p(sig / noise_power_user(f, e, g_u, hw, sigma2_u)) / _LN2)


def rate_eve(f: np.ndarray, e: np.ndarray, g_e: np.ndarray,
             hw: HardwareProfile, sigma2_e: float) -> float:
    sig = np.abs(e.conj() @ g_e @ f) ** 2
    return float(np.log1p(sig / noise_power_eve(f, e, g_e, hw, sigma2_e)) / _LN2)


def rate_difference(f: np.ndarray, e: np.ndarray, ch: ChannelSet,
                    hw: HardwareProfile, noise: NoiseConfig) -> float:
    """Unclamped user-minus-eavesdropper rate; the optimization objective."""
    eq = equivalent_channels(ch)
    return (rate_user(f, e, eq.G_U, hw, noise.sigma2_u)
            - rate_eve(f, e, eq.G_E, hw, noise.sigma2_e))


def secrecy_rate(f: np.ndarray, e: np.ndarray, ch: ChannelSet,
                 hw: HardwareProfile, noise: NoiseConfig) -> float:
    """Clamped secrecy rate max(R_U - R_E, 0) in bits/s/Hz."""
    return max(rate_difference(f, e, ch, hw, noise), 0.0)


@dataclass(frozen=True)
class OracleEstimate:
    """Empirical SINRs and noise powers from the sample-level simulator."""

    sinr_u: float
    sinr_e: float
    noise_power_u: float
    noise_power_e: float
    signal_power_u: float
    signal_power_e: float

    @property
    def rate_u(self) -> float:
        return float(np.log1p(self.sinr_u) / _LN2)

    @property
    def rate_e(self) -> float:
        return float(np.log1p(self.sinr_e) / _LN2)


def mc_rate_oracle(f: np.ndarray, e: np.ndarray, ch: ChannelSet,
                   hw: HardwareProfile, noise: NoiseConfig,
                   n_samples: int, seed: int,
                   chunk: int = 1 << 17) -> OracleEstimate:
    """Simulate the signal chain sample by sample and estimate SINRs.

    Draws the data symbol, per-antenna transmit distortion, and thermal noise,
    forms the received samples, and splits them into data and noise parts. The
    receive-distortion variance is taken from the empirical undistorted
    received power (two passes over the same batch), not from the analytic
    formula under test.
    """
    if n_samples < 1:
        raise ValueError("need at least one sample")
    eq = equivalent_channels(ch)
    g_u = e.conj() @ eq.G_U
    g_e = e.conj() @ eq.G_E
    gu_f = g_u @ f
    ge_f = g_e @ f
    n_ant = f.shape[0]
    mt_std = np.sqrt(hw.mu_t) * np.abs(f)      # per-antenna distortion scale

    rng = link_rng_for_oracle(seed)

    y_u_clean = np.empty(n_samples, dtype=complex)   # signal+TX distortion+thermal
    sig_u = np.empty(n_samples, dtype=complex)
    noise_e_part = np.empty(n_samples, dtype=complex)
    sig_e = np.empty(n_samples, dtype=complex)

    def cn(rng_, shape, scale=1.0):
        return scale * (rng_.standard_normal(shape) + 1j * rng_.standard_normal(shape)) / np.sqrt(2.0)

    for start in range(0, n_samples, chunk):
        stop = min(start + chunk, n_samples)
        k = stop - start
        s = cn(rng, k)
        m_t = cn(rng, (k, n_ant)) * mt_std[None, :]   # CN(0, mu_t |f_i|^2) per antenna
        n_u = cn(rng, k, np.sqrt(noise.sigma2_u))
        n_e = cn(rng, k, np.sqrt(noise.sigma2_e))
        sig_u[start:stop] = gu_f * s
        sig_e[start:stop] = ge_f * s
        dist_u = m_t @ g_u
        y_u_clean[start:stop] = sig_u[start:stop] + dist_u + n_u
        noise_e_part[start:stop] = m_t @ g_e + n_e

    # pass 2: receive distortion scaled by the empirical undistorted power
    undistorted_power = float(np.mean(np.abs(y_u_clean) ** 2))
    m_u = cn(rng, n_samples, np.sqrt(hw.mu_r * undistorted_power))
    noise_u_part = (y_u_clean - sig_u) + m_u

    p_sig_u = float(np.mean(np.abs(sig_u) ** 2))
    p_sig_e = float(np.mean(np.abs(sig_e) ** 2))
    p_noise_u = float(np.mean(np.abs(noise_u_part) ** 2))
    p_noise_e = float(np.mean(np.abs(noise_e_part) ** 2))
    return OracleEstimate(
        sinr_u=p_sig_u / p_noise_u,
        sinr_e=p_sig_e / p_noise_e,
        noise_power_u=p_noise_u,
        noise_power_e=p_noise_e,
        signal_power_u=p_sig_u,
        signal_power_e=p_sig_e,
    )


def link_rng_for_oracle(seed: int) -> np.random.Generator:
    from .channel import link_rng

    return link_rng(seed, "mc-oracle")
