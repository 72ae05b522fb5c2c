"""Scenario synthesis: path loss, ULA steering, Rician fading, per-link RNG streams.

Both arrays are uniform linear arrays with half-wavelength spacing; angles are
measured from the positive x-axis of the 2-D layout, and steering phases use
pi * k * sin(theta). Each link draws its small-scale fading from its own
counter-based substream so a scenario is a pure function of (config, seed).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .config import Geometry, SystemConfig, distance


@dataclass(frozen=True)
class ChannelSet:
    """The five propagation channels of the BS / RIS / user / eavesdropper layout.

    H_BR : (M, N) BS to RIS
    h_BU : (N,)   BS to user        h_RU : (M,) RIS to user
    h_BE : (N,)   BS to eavesdropper  h_RE : (M,) RIS to eavesdropper
    """

    H_BR: np.ndarray
    h_BU: np.ndarray
    h_RU: np.ndarray
    h_BE: np.ndarray
    h_RE: np.ndarray

    def __post_init__(self):
        m, n = self.H_BR.shape
        if self.h_BU.shape != (n,) or self.h_BE.shape != (n,):
            raise ValueError("direct-channel length must equal the BS antenna count")
        if self.h_RU.shape != (m,) or self.h_RE.shape != (m,):
            raise ValueError("RIS-channel length must equal the RIS element count")
        for arr in (self.H_BR, self.h_BU, self.h_RU, self.h_BE, self.h_RE):
            if not np.all(np.isfinite(arr)):
                raise ValueError("channel entries must be finite")

    @property
    def n_ris(self) -> int:
        return self.H_BR.shape[0]

    @property
    def n_bs(self) -> int:
        return self.H_BR.shape[1]

    def without_ris(self) -> "ChannelSet":
        """Drop the reflected paths: the no-RIS variant of the same scenario."""
        n = self.n_bs
        empty = np.zeros((0,), dtype=complex)
        return ChannelSet(np.zeros((0, n), dtype=complex), self.h_BU, empty, self.h_BE, empty)

    def scaled_bs_side(self, amplitude: float) -> "ChannelSet":
        """Scale only the channels leaving the BS, preserving cascade structure."""
        return ChannelSet(
            self.H_BR * amplitude,
            self.h_BU * amplitude,
            self.h_RU,
            self.h_BE * amplitude,
            self.h_RE,
        )


def path_loss_db(d: float, alpha: float) -> float:
    """Large-scale path loss in dB: -30 - 10*alpha*log10(d), d in meters."""
    if d <= 0:
        raise ValueError("distance must be positive")
    return -30.0 - 10.0 * alpha * np.log10(d)


def path_loss_amplitude(d: float, alpha: float) -> float:
    """Linear amplitude scale corresponding to path_loss_db."""
    return float(10.0 ** (path_loss_db(d, alpha) / 20.0))


def steering_vector(theta: float, n: int) -> np.ndarray:
    """Half-wavelength ULA steering vector: entry k is exp(j*pi*k*sin(theta))."""
    if n < 1:
        raise ValueError("element count must be >= 1")
    return np.exp(1j * np.pi * np.arange(n) * np.sin(theta))


def link_rng(seed: int, label: str) -> np.random.Generator:
    """Counter-based generator for one link, derived from (seed, label).

    Uses a SHA-256 digest of the label so substreams do not depend on Python's
    per-process string hashing.
    """
    label_key = int.from_bytes(hashlib.sha256(label.encode()).digest()[:8], "big")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), label_key])))


def synth_rician(rows: int, cols: int, k_factor: float, los: np.ndarray,
                 rng: np.random.Generator) -> np.ndarray:
    """Rician draw: sqrt(K/(K+1))*LoS + sqrt(1/(K+1))*W, W i.i.d. CN(0,1).

    The LoS matrix must be unit-modulus so every entry keeps unit mean power.
    """
    if k_factor < 0:
        raise ValueError("Rician K-factor must be >= 0")
    los = np.asarray(los, dtype=complex)
    if los.shape != (rows, cols):
        raise ValueError(f"LoS shape {los.shape} does not match ({rows}, {cols})")
    if los.size and not np.allclose(np.abs(los), 1.0, atol=1e-9):
        raise ValueError("LoS entries must have unit modulus")
    w = (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / np.sqrt(2.0)
    return np.sqrt(k_factor / (k_factor + 1.0)) * los + np.sqrt(1.0 / (k_factor + 1.0)) * w


def _angle(src: tuple[float, float], dst: tuple[float, float]) -> float:
    return float(np.arctan2(dst[1] - src[1], dst[0] - src[0]))


def build_scenario(config: SystemConfig, seed: int) -> ChannelSet:
    """Synthesize all five channels for the configured geometry, deterministically.

    Each channel is sqrt(linear path loss) times a Rician draw whose LoS part
    is built from steering vectors; the BS-RIS LoS is the outer product of the
    RIS arrival and BS departure steering vectors.
    """
    n = config.n_bs_antennas
    m = config.n_ris_elements
    geo: Geometry = config.geometry
    fad = config.fading

    def vec_link(src, dst, n_elems, alpha, k, label):
        amp = path_loss_amplitude(distance(src, dst), alpha)
        los = steering_vector(_angle(src, dst), n_elems)[:, None]
        draw = synth_rician(n_elems, 1, k, los, link_rng(seed, label))
        return amp * draw[:, 0]

    h_bu = vec_link(geo.bs_pos, geo.user_pos, n, fad.alpha_direct, fad.ricean_k_direct, "bs-user")
    h_be = vec_link(geo.bs_pos, geo.eve_pos, n, fad.alpha_direct, fad.ricean_k_direct, "bs-eve")

    if m > 0:
        amp_br = path_loss_amplitude(distance(geo.bs_pos, geo.ris_pos), fad.alpha_ris)
        a_arrive = steering_vector(_angle(geo.ris_pos, geo.bs_pos), m)
        a_depart = steering_vector(_angle(geo.bs_pos, geo.ris_pos), n)
        los_br = np.outer(a_arrive, a_depart.conj())
        h_br = amp_br * synth_rician(m, n, fad.ricean_k_ris, los_br, link_rng(seed, "bs-ris"))
        h_ru = vec_link(geo.ris_pos, geo.user_pos, m, fad.alpha_ris, fad.ricean_k_ris, "ris-user")
        h_re = vec_link(geo.ris_pos, geo.eve_pos, m, fad.alpha_ris, fad.ricean_k_ris, "ris-eve")
    else:
        h_br = np.zeros((0, n), dtype=complex)
        h_ru = np.zeros((0,), dtype=complex)
        h_re = np.zeros((0,), dtype=complex)

    return ChannelSet(h_br, h_bu, h_ru, h_be, h_re)


def normalize_to_unit_noise(ch: ChannelSet, noise) -> tuple[ChannelSet, "NoiseConfig"]:
    """Rescale the BS-side channels by 1/sigma_U so the user noise power is 1.

    Scaling H_BR, h_BU, h_BE (and the eavesdropper noise by 1/sigma_U^2)
    multiplies both equivalent channels by 1/sigma_U, so every rate is exactly
    invariant. It only moves the problem into a numerically friendly range for
    the conic solvers: physical -80 dBm noise with dB-scale path losses
    conditions the subproblems badly. Cascaded links must not be scaled twice,
    which is why the RIS-side vectors stay untouched.
    """
    from .config import NoiseConfig

    scale = 1.0 / np.sqrt(noise.sigma2_u)
    return ch.scaled_bs_side(scale), NoiseConfig(1.0, noise.sigma2_e / noise.sigma2_u)
