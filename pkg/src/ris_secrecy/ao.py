"""Alternating optimization driver, benchmark schemes, and a tiny brute-force oracle.

Each outer iteration updates the beamformer by one SCA step at the current
reflect vector, then the reflect vector by one SDR step at the new beamformer,
accepting the rounded candidate only if it does not reduce the secrecy rate.
The reported rate is always recomputed from the closed-form metrics at the
current iterates, never the surrogate objective.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import active, passive
from .channel import ChannelSet, link_rng
from .config import HardwareProfile, IDEAL_HARDWARE, NoiseConfig, SolverOptions
from .metrics import equivalent_channels, rate_difference, secrecy_rate

SCHEMES = ("ris-robust", "nonris-robust", "ris-nonrobust", "nonris-nonrobust")


@dataclass
class IterationAudit:
    """Per-iteration solver and SCA health indicators."""

    iteration: int
    f_status: str
    f_kkt: float = math.nan
    f_equality_gap: float = math.nan
    f_tangency: float = math.nan
    e_status: str = "skipped"
    e_kkt: float = math.nan
    e_equality_gap: float = math.nan
    e_tangency: float = math.nan
    rank1: float = math.nan


@dataclass
class AOState:
    """Mutable driver state: iterates, expansion anchors, rate history."""

    f: np.ndarray
    e: np.ndarray
    taylor_active: active.ActiveTaylorPoint | None
    taylor_passive: passive.PassiveTaylorPoint | None
    history: list[float] = field(default_factory=list)
    iter: int = 0
    stalled: int = 0


@dataclass
class AOResult:
    f: np.ndarray
    e: np.ndarray
    history: list[float]
    iterations: int
    converged: bool
    stalled_iterations: int
    rank1_final: float
    audits: list[IterationAudit]

    @property
    def secrecy_rate(self) -> float:
        return self.history[-1]


def initial_beamformer(ch: ChannelSet, p_max: float) -> np.ndarray:
    """Maximum-ratio transmission toward the user, at full power."""
    nrm = np.linalg.norm(ch.h_BU)
    if nrm == 0.0 or p_max == 0.0:
        return np.zeros(ch.n_bs, dtype=complex)
    return np.sqrt(p_max) * ch.h_BU / nrm


def initial_reflect(m: int, random_phase: bool = False,
                    rng: np.random.Generator | None = None) -> np.ndarray:
    e = np.ones(m + 1, dtype=complex)
    if random_phase and m > 0:
        if rng is None:
            raise ValueError("random phase init needs a generator")
        e[:m] = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, m))
    return e


def run_ao(ch: ChannelSet, hw: HardwareProfile, noise: NoiseConfig, p_max: float,
           options: SolverOptions = SolverOptions(), seed: int = 0,
           audit: bool = False) -> AOResult:
    """Alternate beamformer and reflect updates until the rate stabilizes.

    Stops when the clamped rate changes by less than `ao_eps`, the iteration
    budget runs out, or two consecutive iterations stall on solver failures.
    """
    if p_max < 0:
        raise ValueError("transmit power budget must be >= 0")
    m = ch.n_ris
    eq = equivalent_channels(ch)
    rng = link_rng(seed, "gaussian-randomization")
    e = initial_reflect(m, options.random_phase_init, rng)
    f = initial_beamformer(ch, p_max)
    state = AOState(f, e, None, None)
    state.history.append(secrecy_rate(f, e, ch, hw, noise))
    audits: list[IterationAudit] = []
    rank1_final = math.nan

    if p_max == 0.0:
        return AOResult(f, e, state.history, 0, True, 0, rank1_final, audits)

    def evaluator(f_, e_):
        return secrecy_rate(f_, e_, ch, hw, noise)

    consecutive_stalls = 0
    converged = False
    stalled_total = 0
    warm_e = None
    inner_eps = options.inner_eps_value

    for it in range(1, options.ao_max_iters + 1):
        state.iter = it
        rec = IterationAudit(it, "skipped")
        iteration_stalled = False

        # beamformer block: re-linearize until its own gains die out
        rate_now = rate_difference(state.f, state.e, ch, hw, noise)
        for _ in range(max(options.inner_f_max, 1)):
            fstep = active.solve_f_step(state.f, state.e, eq.G_U, eq.G_E, hw, noise,
                                        p_max, tol=options.solver_tol)
            rec.f_status = fstep.solve_result.status
            if fstep.stalled:
                iteration_stalled = True
                break
            state.f = fstep.f
            state.taylor_active = fstep.taylor
            rec.f_kkt = fstep.solve_result.max_kkt_residual
            rec.f_equality_gap = fstep.equality_gap
            rate_next = rate_difference(state.f, state.e, ch, hw, noise)
            gain, rate_now = rate_next - rate_now, rate_next
            if gain < inner_eps:
                break

        # reflect block
        if m > 0:
            e_stalled = True
            rate_now = evaluator(state.f, state.e)
            for _ in range(max(options.inner_e_max, 1)):
                estep = passive.solve_e_step(state.f, state.e, eq.G_U, eq.G_E, hw, noise,
                                             rng, evaluator,
                                             randomization_count=options.randomization_count,
                                             tol=options.solver_tol, warm=warm_e)
                rec.e_status = estep.solve_result.status
                if estep.stalled:
                    break
                e_stalled = False
                state.e = estep.e
                state.taylor_passive = estep.taylor
                warm_e = estep.solve_result
                rec.e_kkt = estep.solve_result.max_kkt_residual
                rec.e_equality_gap = estep.equality_gap
                rec.rank1 = estep.rank1
                rank1_final = estep.rank1
                rate_next = evaluator(state.f, state.e)
                gain, rate_now = rate_next - rate_now, rate_next
                if gain < inner_eps:
                    break
            iteration_stalled = iteration_stalled or e_stalled

        if audit:
            _audit_tangency(rec, state, eq, hw, noise, p_max)
        audits.append(rec)

        rate = secrecy_rate(state.f, state.e, ch, hw, noise)
        state.history.append(rate)

        if iteration_stalled:
            stalled_total += 1
            consecutive_stalls += 1
            if consecutive_stalls >= 2:
                break
        else:
            consecutive_stalls = 0
            if abs(state.history[-1] - state.history[-2]) < options.ao_eps:
                converged = True
                break

    return AOResult(state.f, state.e, state.history, state.iter, converged,
                    stalled_total, rank1_final, audits)


def _audit_tangency(rec: IterationAudit, state: AOState, eq, hw, noise, p_max) -> None:
    """Expansion-point feasibility of freshly built subproblems at the iterate."""
    from .conic import evaluate_violations

    tp_f = active.taylor_point(state.f, state.e, eq.G_U, eq.G_E, hw, noise)
    built_f = active.build_f_subproblem(
        tp_f, active.build_quadratic_forms(state.e, eq.G_U, eq.G_E, hw),
        eq.G_U, eq.G_E, state.e, hw, noise, p_max)
    rec.f_tangency = max(evaluate_violations(built_f.program, built_f.expansion_point()))

    if state.e.shape[0] > 1:
        mats = passive.build_trace_matrices(state.f, eq.G_U, eq.G_E, hw)
        tp_e = passive.taylor_point(mats, state.e, noise, hw)
        built_e = passive.build_e_subproblem(tp_e, mats, noise, hw)
        rec.e_tangency = max(evaluate_violations(built_e.program,
                                                 built_e.expansion_point(state.e)))


@dataclass
class SchemeResult:
    scheme: str
    secrecy_rate: float          # evaluated under the true hardware profile
    ao: AOResult


def run_scheme(scheme: str, ch: ChannelSet, hw_true: HardwareProfile,
               noise: NoiseConfig, p_max: float,
               options: SolverOptions = SolverOptions(), seed: int = 0,
               audit: bool = False) -> SchemeResult:
    """Optimize under the scheme's assumptions, evaluate under the truth.

    Non-robust schemes design (f, e) pretending the hardware is ideal; no-RIS
    schemes drop the reflected paths entirely. The returned rate always comes
    from the true hardware profile via the metrics module.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme '{scheme}'")
    use_ch = ch if scheme.startswith("ris") else ch.without_ris()
    hw_design = hw_true if scheme.endswith("robust") and not scheme.endswith("nonrobust") else IDEAL_HARDWARE
    res = run_ao(use_ch, hw_design, noise, p_max, options, seed, audit)
    rate_true = secrecy_rate(res.f, res.e, use_ch, hw_true, noise)
    return SchemeResult(scheme, rate_true, res)


def brute_force_small(ch: ChannelSet, hw: HardwareProfile, noise: NoiseConfig,
                      p_max: float, phase_grid_size: int = 64,
                      power_grid_size: int = 33) -> float:
    """Exhaustive grid search over reflect phases and transmit power, N = 1.

    The beamformer phase is irrelevant for N = 1 (every term depends on |f|^2
    only), so the search is over per-element phase grids and a power grid of
    the exact clamped secrecy rate.
    """
    if ch.n_bs != 1:
        raise ValueError("brute force requires a single BS antenna")
    m = ch.n_ris
    if m > 3:
        raise ValueError("brute force limited to at most 3 RIS elements")
    eq = equivalent_channels(ch)
    g_u = eq.G_U[:, 0]
    g_e = eq.G_E[:, 0]

    phases = 2.0 * np.pi * np.arange(phase_grid_size) / phase_grid_size
    grids = np.meshgrid(*([phases] * m), indexing="ij") if m else []
    combos = np.stack([g.ravel() for g in grids], axis=1) if m else np.zeros((1, 0))
    e_all = np.hstack([np.exp(1j * combos), np.ones((combos.shape[0], 1))])

    au = np.abs(e_all.conj() @ g_u) ** 2              # per candidate |e^H G_U|^2
    ae = np.abs(e_all.conj() @ g_e) ** 2
    p = np.linspace(0.0, p_max, power_grid_size)[None, :]

    phi_u = (hw.mu_r + (1.0 + hw.mu_r) * hw.mu_t) * p * au[:, None] \
        + (1.0 + hw.mu_r) * noise.sigma2_u
    phi_e = hw.mu_t * p * ae[:, None] + noise.sigma2_e
    rate = (np.log1p(p * au[:, None] / phi_u) - np.log1p(p * ae[:, None] / phi_e)) / np.log(2.0)
    return float(max(rate.max(), 0.0))
