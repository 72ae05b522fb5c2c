"""SDR subproblem for the reflect vector with the beamformer fixed.

The unit-modulus vector is lifted to a Hermitian PSD matrix with unit diagonal
(rank constraint dropped), the rate terms become traces against four PSD
matrices, logs are handled exactly via exponential cones or tangents as in the
beamformer step, and the lifted optimum is rounded back to the feasible set by
Gaussian randomization plus phase projection. A safeguarded update keeps the
objective sequence non-decreasing even when rounding loses ground.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .config import HardwareProfile, NoiseConfig
from .conic import (
    ConeConstraint,
    ConicProgram,
    ExpCone,
    NonnegCone,
    PsdCone,
    SolveResult,
    ZeroCone,
    solve,
    svec_index,
)

_LN2 = np.log(2.0)
_SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class TraceMatrices:
    """Hermitian forms whose traces against the lifted matrix give the four
    rate terms; b1 - b2 and b3 - b4 are the rank-one signal parts."""

    b1: np.ndarray
    b2: np.ndarray
    b3: np.ndarray
    b4: np.ndarray


def build_trace_matrices(f: np.ndarray, g_u: np.ndarray, g_e: np.ndarray,
                         hw: HardwareProfile) -> TraceMatrices:
    gu_f = g_u @ f
    ge_f = g_e @ f
    abs_f2 = np.abs(f) ** 2
    sig_u = np.outer(gu_f, gu_f.conj())
    sig_e = np.outer(ge_f, ge_f.conj())
    b2 = hw.mu_r * sig_u + (1.0 + hw.mu_r) * hw.mu_t * ((g_u * abs_f2[None, :]) @ g_u.conj().T)
    b4 = hw.mu_t * ((g_e * abs_f2[None, :]) @ g_e.conj().T)
    return TraceMatrices(b2 + sig_u, b2, b4 + sig_e, b4)


@dataclass(frozen=True)
class PassiveTaylorPoint:
    """Positive anchors (r1..r4) of the reflect step, evaluated at (f, e)."""

    r: np.ndarray

    def __post_init__(self):
        if np.any(self.r <= 0):
            raise ValueError("Taylor anchors must be strictly positive")


def taylor_point(mats: TraceMatrices, e: np.ndarray, noise: NoiseConfig,
                 hw: HardwareProfile) -> PassiveTaylorPoint:
    sig_u2 = (1.0 + hw.mu_r) * noise.sigma2_u
    vals = [float(np.real(e.conj() @ m @ e)) for m in (mats.b1, mats.b2, mats.b3, mats.b4)]
    return PassiveTaylorPoint(np.array([vals[0] + sig_u2, vals[1] + sig_u2,
                                        vals[2] + noise.sigma2_e, vals[3] + noise.sigma2_e]))


def _trace_row(b: np.ndarray, d: int, nv: int) -> np.ndarray:
    """Coefficients of Tr(B E) over the Hermitian parameter layout below."""
    row = np.zeros(nv)
    row[:d] = b.diagonal().real
    t = 0
    npairs = d * (d - 1) // 2
    for j in range(1, d):
        for i in range(j):
            row[d + t] = 2.0 * b[i, j].real
            row[d + npairs + t] = 2.0 * b[i, j].imag
            t += 1
    return row


def _embedding_psd_map(d: int, nv: int) -> sp.csr_matrix:
    """svec of the real 2d x 2d embedding as a sparse map over the parameters.

    Parameter layout: [diag (d), Re upper off-diag (column-major, d(d-1)/2),
    Im upper off-diag (same order)], then any trailing auxiliary variables.
    """
    npairs = d * (d - 1) // 2
    rows, cols, vals = [], [], []
    for i in range(d):
        rows += [svec_index(i, i), svec_index(d + i, d + i)]
        cols += [i, i]
        vals += [1.0, 1.0]
    t = 0
    for j in range(1, d):
        for i in range(j):
            # Re E_ij enters blocks A and A' symmetrically
            rows += [svec_index(i, j), svec_index(d + i, d + j)]
            cols += [d + t, d + t]
            vals += [_SQRT2, _SQRT2]
            # Im E_ij enters the off-diagonal blocks antisymmetrically
            rows += [svec_index(i, d + j), svec_index(j, d + i)]
            cols += [d + npairs + t, d + npairs + t]
            vals += [-_SQRT2, _SQRT2]
            t += 1
    nsv = 2 * d * (2 * d + 1) // 2
    return sp.csr_matrix(sp.coo_matrix((vals, (rows, cols)), shape=(nsv, nv)))


def _params_from_matrix(e_mat: np.ndarray) -> np.ndarray:
    d = e_mat.shape[0]
    npairs = d * (d - 1) // 2
    x = np.empty(d * d)
    x[:d] = e_mat.diagonal().real
    t = 0
    for j in range(1, d):
        for i in range(j):
            x[d + t] = e_mat[i, j].real
            x[d + npairs + t] = e_mat[i, j].imag
            t += 1
    return x


def _matrix_from_params(x: np.ndarray, d: int) -> np.ndarray:
    npairs = d * (d - 1) // 2
    out = np.diag(x[:d].astype(complex))
    t = 0
    for j in range(1, d):
        for i in range(j):
            out[i, j] = x[d + t] + 1j * x[d + npairs + t]
            out[j, i] = out[i, j].conjugate()
            t += 1
    return out


@dataclass
class ReflectProgram:
    """Built lifted subproblem plus bookkeeping for extraction and audits."""

    program: ConicProgram
    tp: PassiveTaylorPoint
    order: int  # d = M + 1

    @property
    def _ip(self) -> int:
        return self.order * self.order

    def extract(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        ip = self._ip
        return _matrix_from_params(x, self.order), x[ip:ip + 4].copy(), x[ip + 4:ip + 8].copy()

    def expansion_point(self, e: np.ndarray) -> np.ndarray:
        x = np.zeros(self.program.n_vars)
        x[:self._ip] = _params_from_matrix(np.outer(e, e.conj()))
        x[self._ip + 4:self._ip + 8] = self.tp.r
        x[self._ip:self._ip + 4] = np.log2(self.tp.r)
        return x

    def equality_gaps(self, x: np.ndarray) -> np.ndarray:
        _, p, r = self.extract(x)
        r2n, r3n = self.tp.r[1], self.tp.r[2]
        tangent2 = np.log2(r2n) + (r[1] - r2n) / (r2n * _LN2)
        tangent3 = np.log2(r3n) + (r[2] - r3n) / (r3n * _LN2)
        return np.abs([p[0] - np.log2(r[0]), p[1] - tangent2,
                       p[2] - tangent3, p[3] - np.log2(r[3])])

    def surrogate_value(self, x: np.ndarray) -> float:
        _, p, _ = self.extract(x)
        return float(p[0] - p[1] - p[2] + p[3])


def build_e_subproblem(tp: PassiveTaylorPoint, mats: TraceMatrices,
                       noise: NoiseConfig, hw: HardwareProfile) -> ReflectProgram:
    """Assemble the SDR program over the lifted reflect matrix.

    Variables: [Hermitian parameters of the lift (d^2), p1..p4, r1..r4];
    objective p1 - p2 - p3 + p4; the PSD membership runs through the real
    embedding, the unit diagonal through a zero cone.
    """
    d = mats.b1.shape[0]
    nv = d * d + 8
    ip, ir = d * d, d * d + 4
    sig_u2 = (1.0 + hw.mu_r) * noise.sigma2_u

    cons = [ConeConstraint(_embedding_psd_map(d, nv), np.zeros(d * (2 * d + 1)),
                           PsdCone(2 * d), "lifted-psd")]

    f_diag = sp.csr_matrix((np.ones(d), (np.arange(d), np.arange(d))), shape=(d, nv))
    cons.append(ConeConstraint(f_diag, -np.ones(d), ZeroCone(d), "unit-diag"))

    for b, const, r_idx, sign, label in (
        (mats.b1, sig_u2, ir + 0, +1.0, "trace-num-user"),   # Tr{B1 E} + c >= r1
        (mats.b2, sig_u2, ir + 1, -1.0, "trace-den-user"),   # Tr{B2 E} + c <= r2
        (mats.b3, noise.sigma2_e, ir + 2, -1.0, "trace-num-eve"),
        (mats.b4, noise.sigma2_e, ir + 3, +1.0, "trace-den-eve"),
    ):
        row = sign * _trace_row(b, d, nv)
        row[r_idx] = -sign
        cons.append(ConeConstraint(row[None, :], np.array([sign * const]), NonnegCone(1), label))

    for p_idx, r_idx, label in ((ip + 0, ir + 0, "log-num-user"),
                                (ip + 3, ir + 3, "log-den-eve")):
        f_exp = np.zeros((3, nv))
        f_exp[0, p_idx] = _LN2
        f_exp[2, r_idx] = 1.0
        cons.append(ConeConstraint(f_exp, np.array([0.0, 1.0, 0.0]), ExpCone(), label))

    for p_idx, r_idx, rn, label in ((ip + 1, ir + 1, tp.r[1], "tangent-den-user"),
                                    (ip + 2, ir + 2, tp.r[2], "tangent-num-eve")):
        row = np.zeros(nv)
        row[p_idx] = 1.0
        row[r_idx] = -1.0 / (rn * _LN2)
        cons.append(ConeConstraint(row[None, :], np.array([1.0 / _LN2 - np.log2(rn)]),
                                   NonnegCone(1), label))

    obj = np.zeros(nv)
    obj[ip:ip + 4] = [1.0, -1.0, -1.0, 1.0]
    return ReflectProgram(ConicProgram(nv, obj, tuple(cons)), tp, d)


def rank1_ratio(e_tilde: np.ndarray) -> float:
    """Largest-eigenvalue share of the trace; 1 means the relaxation is tight."""
    w = np.linalg.eigvalsh((e_tilde + e_tilde.conj().T) / 2.0)
    return float(w[-1] / w.sum())


def project_unit_modulus(v: np.ndarray) -> np.ndarray:
    """Phase-only projection onto unit-modulus vectors with trailing entry 1."""
    if v[-1] == 0:
        raise ValueError("cannot project: reference entry is zero")
    e = np.exp(1j * np.angle(v * np.conj(v[-1])))
    e[-1] = 1.0
    return e


def gaussian_randomization(e_tilde: np.ndarray, count: int, rng: np.random.Generator,
                           objective: Callable[[np.ndarray], float],
                           psd_tol: float = 1e-9) -> np.ndarray:
    """Best unit-modulus candidate from CN(0, lift) samples plus the dominant
    eigenvector; candidates are scored by the caller-supplied objective.

    Negative eigenvalues within psd_tol (relative) are clipped to zero; beyond
    that the input is rejected as non-PSD.
    """
    if count < 0:
        raise ValueError("sample count must be >= 0")
    h = (e_tilde + e_tilde.conj().T) / 2.0
    w, v = np.linalg.eigh(h)
    if w[0] < -psd_tol * max(1.0, w[-1]):
        raise ValueError("lifted matrix is not PSD within tolerance")
    factor = v * np.sqrt(np.clip(w, 0.0, None))[None, :]
    d = h.shape[0]

    best_e = project_unit_modulus(v[:, -1])
    best_val = objective(best_e)
    for _ in range(count):
        draw = factor @ ((rng.standard_normal(d) + 1j * rng.standard_normal(d)) / np.sqrt(2.0))
        if draw[-1] == 0:
            continue
        cand = project_unit_modulus(draw)
        val = objective(cand)
        if val > best_val:
            best_e, best_val = cand, val
    return best_e


def safeguarded_update(e_candidate: np.ndarray, e_prev: np.ndarray,
                       f_next: np.ndarray,
                       evaluator: Callable[[np.ndarray, np.ndarray], float]) -> np.ndarray:
    """Keep the candidate only if it does not decrease the objective (ties go
    to the candidate)."""
    if evaluator(f_next, e_candidate) >= evaluator(f_next, e_prev):
        return e_candidate
    return e_prev


def _make_polish(built: ReflectProgram, mats: TraceMatrices,
                 noise: NoiseConfig, hw: HardwareProfile):
    """Exact-feasibility repair for first-order solutions of the lifted program.

    Clips the lift's negative eigenvalues, renormalizes the diagonal back to
    one, and recomputes the auxiliary scalars at their binding values; the
    result satisfies every constraint to machine precision while moving the
    objective by at most the original infeasibility.
    """
    d = built.order
    sig_u2 = (1.0 + hw.mu_r) * noise.sigma2_u
    tp = built.tp

    def polish(x: np.ndarray) -> np.ndarray:
        e_mat, _, _ = built.extract(x)
        w, v = np.linalg.eigh((e_mat + e_mat.conj().T) / 2.0)
        fixed = (v * np.clip(w, 0.0, None)) @ v.conj().T
        diag = np.real(np.diag(fixed)).copy()
        diag[diag <= 0] = 1.0
        fixed = fixed / np.sqrt(np.outer(diag, diag))
        np.fill_diagonal(fixed, 1.0)
        r = np.array([
            np.real(np.trace(mats.b1 @ fixed)) + sig_u2,
            np.real(np.trace(mats.b2 @ fixed)) + sig_u2,
            np.real(np.trace(mats.b3 @ fixed)) + noise.sigma2_e,
            np.real(np.trace(mats.b4 @ fixed)) + noise.sigma2_e,
        ])
        tangent2 = np.log2(tp.r[1]) + (r[1] - tp.r[1]) / (tp.r[1] * _LN2)
        tangent3 = np.log2(tp.r[2]) + (r[2] - tp.r[2]) / (tp.r[2] * _LN2)
        out = x.copy()
        out[:d * d] = _params_from_matrix(fixed)
        out[d * d:d * d + 4] = [np.log2(r[0]), tangent2, tangent3, np.log2(r[3])]
        out[d * d + 4:d * d + 8] = r
        return out

    return polish


@dataclass
class ReflectStep:
    e: np.ndarray
    taylor: PassiveTaylorPoint
    solve_result: SolveResult
    surrogate: float | None
    equality_gap: float | None
    rank1: float | None
    stalled: bool
    accepted: bool


def solve_e_step(f: np.ndarray, e_prev: np.ndarray, g_u: np.ndarray, g_e: np.ndarray,
                 hw: HardwareProfile, noise: NoiseConfig,
                 rng: np.random.Generator,
                 evaluator: Callable[[np.ndarray, np.ndarray], float],
                 randomization_count: int = 200,
                 tol: float = 1e-8, backend: str | None = None,
                 warm: SolveResult | None = None) -> ReflectStep:
    """One reflect update: lift, solve, randomize, project, safeguard."""
    mats = build_trace_matrices(f, g_u, g_e, hw)
    tp = taylor_point(mats, e_prev, noise, hw)
    built = build_e_subproblem(tp, mats, noise, hw)
    result = solve(built.program, tol=tol, backend=backend, warm=warm,
                   polish=_make_polish(built, mats, noise, hw))
    if result.status != "optimal":
        return ReflectStep(e_prev, tp, result, None, None, None, True, False)
    e_tilde, _, _ = built.extract(result.primal)
    # first-order backends leave eigenvalue noise at the residual scale
    candidate = gaussian_randomization(e_tilde, randomization_count, rng,
                                       lambda e: evaluator(f, e), psd_tol=10.0 * tol)
    e_new = safeguarded_update(candidate, e_prev, f, evaluator)
    return ReflectStep(
        e_new, tp, result,
        built.surrogate_value(result.primal),
        float(built.equality_gaps(result.primal).max()),
        rank1_ratio(e_tilde),
        False,
        e_new is not e_prev,
    )
