"""SCA subproblem for the transmit beamformer with the reflect vector fixed.

The non-convex rate difference is rewritten through auxiliary variables
(p, r_f); concave pieces are replaced by first-order tangents at the current
iterate, quadratic lower bounds use the linearization
2 Re{f_n^H A f} - f_n^H A f_n <= f^H A f, and the remaining convex pieces are
encoded exactly (second-order cones for the quadratic upper bounds,
exponential cones for the logs). Solving the resulting program can only
improve the true objective, up to solver tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import HardwareProfile, NoiseConfig
from .conic import (
    ConeConstraint,
    ConicProgram,
    ExpCone,
    NonnegCone,
    SecondOrderCone,
    SolveResult,
    solve,
)

_LN2 = np.log(2.0)


@dataclass(frozen=True)
class ImpairmentMatrices:
    """PSD quadratic forms of the user and eavesdropper rate numerators/denominators."""

    a1: np.ndarray
    a2: np.ndarray


def build_quadratic_forms(e: np.ndarray, g_u: np.ndarray, g_e: np.ndarray,
                          hw: HardwareProfile) -> ImpairmentMatrices:
    """A1 = (1+mu_r)(c c^H + mu_t ddiag(c c^H)) with c = G_U^H e; A2 = mu_t ddiag of the eve side."""
    c_u = g_u.conj().T @ e
    c_e = g_e.conj().T @ e
    a1 = (1.0 + hw.mu_r) * (np.outer(c_u, c_u.conj())
                            + hw.mu_t * np.diag(np.abs(c_u) ** 2))
    a2 = hw.mu_t * np.diag(np.abs(c_e) ** 2).astype(complex)
    return ImpairmentMatrices(a1, a2)


@dataclass(frozen=True)
class ActiveTaylorPoint:
    """Expansion point of the beamformer SCA step: the iterate f_n and the
    four positive anchors r_f evaluated at (f_n, e)."""

    f: np.ndarray
    r: np.ndarray  # (r1, r2, r3, r4)

    def __post_init__(self):
        if np.any(self.r <= 0):
            raise ValueError("Taylor anchors must be strictly positive")


def taylor_point(f: np.ndarray, e: np.ndarray, g_u: np.ndarray, g_e: np.ndarray,
                 hw: HardwareProfile, noise: NoiseConfig) -> ActiveTaylorPoint:
    from .metrics import noise_power_eve, noise_power_user

    phi_u = noise_power_user(f, e, g_u, hw, noise.sigma2_u)
    phi_e = noise_power_eve(f, e, g_e, hw, noise.sigma2_e)
    sig_u = float(np.abs(e.conj() @ g_u @ f) ** 2)
    sig_e = float(np.abs(e.conj() @ g_e @ f) ** 2)
    return ActiveTaylorPoint(f.copy(), np.array([phi_u + sig_u, phi_u, phi_e + sig_e, phi_e]))


def _re_inner_row(a: np.ndarray, n_vars: int, offset: int = 0) -> np.ndarray:
    """Row vector v with v @ x = Re{a^H f} for x = [Re f; Im f; ...]."""
    n = a.shape[0]
    row = np.zeros(n_vars)
    row[offset:offset + n] = a.real
    row[offset + n:offset + 2 * n] = a.imag
    return row


def _psd_sqrt_rows(q: np.ndarray) -> np.ndarray:
    """Factor R with R^H R = Q (Q Hermitian PSD); rows of negligible weight dropped."""
    w, v = np.linalg.eigh((q + q.conj().T) / 2.0)
    w = np.clip(w, 0.0, None)
    keep = w > (w.max(initial=0.0) * 1e-14)
    return (np.sqrt(w[keep])[:, None] * v[:, keep].conj().T)


def _complex_apply_rows(r: np.ndarray, n_vars: int) -> np.ndarray:
    """Rows mapping x = [Re f; Im f; ...] to [Re(R f); Im(R f)]."""
    k, n = r.shape
    rows = np.zeros((2 * k, n_vars))
    rows[:k, :n] = r.real
    rows[:k, n:2 * n] = -r.imag
    rows[k:, :n] = r.imag
    rows[k:, n:2 * n] = r.real
    return rows


@dataclass
class BeamformerProgram:
    """Built subproblem plus the index bookkeeping needed for audits."""

    program: ConicProgram
    tp: ActiveTaylorPoint
    n_antennas: int

    @property
    def _ip(self) -> int:
        return 2 * self.n_antennas

    def extract(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        n, ip = self.n_antennas, self._ip
        f = x[:n] + 1j * x[n:2 * n]
        return f, x[ip:ip + 4].copy(), x[ip + 4:ip + 8].copy()

    def expansion_point(self) -> np.ndarray:
        """Candidate vector at the Taylor point; feasible with tight slack."""
        n, ip = self.n_antennas, self._ip
        x = np.zeros(self.program.n_vars)
        x[:n] = self.tp.f.real
        x[n:2 * n] = self.tp.f.imag
        x[ip + 4:ip + 8] = self.tp.r
        x[ip:ip + 4] = np.log2(self.tp.r)
        return x

    def equality_gaps(self, x: np.ndarray) -> np.ndarray:
        """|p_i - bound_i(r_i)| at a solved point; all four vanish at an optimum."""
        _, p, r = self.extract(x)
        r2n, r3n = self.tp.r[1], self.tp.r[2]
        tangent2 = np.log2(r2n) + (r[1] - r2n) / (r2n * _LN2)
        tangent3 = np.log2(r3n) + (r[2] - r3n) / (r3n * _LN2)
        return np.abs([p[0] - np.log2(r[0]), p[1] - tangent2,
                       p[2] - tangent3, p[3] - np.log2(r[3])])

    def surrogate_value(self, x: np.ndarray) -> float:
        _, p, _ = self.extract(x)
        return float(p[0] - p[1] - p[2] + p[3])


def build_f_subproblem(tp: ActiveTaylorPoint, mats: ImpairmentMatrices,
                       g_u: np.ndarray, g_e: np.ndarray, e: np.ndarray,
                       hw: HardwareProfile, noise: NoiseConfig,
                       p_max: float) -> BeamformerProgram:
    """Assemble the conic program of one beamformer SCA step.

    Variables: [Re f, Im f, p1..p4, r1..r4]; objective p1 - p2 - p3 + p4.
    """
    if p_max < 0:
        raise ValueError("transmit power budget must be >= 0")
    n = g_u.shape[1]
    nv = 2 * n + 8
    ip, ir = 2 * n, 2 * n + 4
    c_u = g_u.conj().T @ e
    c_e = g_e.conj().T @ e
    sig_u2 = (1.0 + hw.mu_r) * noise.sigma2_u

    cons = []

    # ||f|| <= sqrt(P)
    f_pow = np.zeros((2 * n + 1, nv))
    f_pow[1:, :2 * n] = np.eye(2 * n)
    g_pow = np.zeros(2 * n + 1)
    g_pow[0] = np.sqrt(p_max)
    cons.append(ConeConstraint(f_pow, g_pow, SecondOrderCone(2 * n + 1), "power"))

    # linearized quadratic lower bounds: 2Re{f_n^H A f} - f_n^H A f_n + const >= r
    for a_mat, const, r_idx, label in (
        (mats.a1, sig_u2, ir + 0, "lin-num-user"),
        (mats.a2, noise.sigma2_e, ir + 3, "lin-den-eve"),
    ):
        a_fn = a_mat @ tp.f
        row = _re_inner_row(2.0 * a_fn, nv)
        row[r_idx] = -1.0
        offs = const - float(np.real(tp.f.conj() @ a_mat @ tp.f))
        cons.append(ConeConstraint(row[None, :], np.array([offs]), NonnegCone(1), label))

    # exact log cones: log2(r) >= p  <=>  (p ln2, 1, r) in Kexp
    for p_idx, r_idx, label in ((ip + 0, ir + 0, "log-num-user"),
                                (ip + 3, ir + 3, "log-den-eve")):
        f_exp = np.zeros((3, nv))
        f_exp[0, p_idx] = _LN2
        f_exp[2, r_idx] = 1.0
        cons.append(ConeConstraint(f_exp, np.array([0.0, 1.0, 0.0]), ExpCone(), label))

    # tangent upper bounds of the log terms at the anchors
    for p_idx, r_idx, rn, label in ((ip + 1, ir + 1, tp.r[1], "tangent-den-user"),
                                    (ip + 2, ir + 2, tp.r[2], "tangent-num-eve")):
        row = np.zeros(nv)
        row[p_idx] = 1.0
        row[r_idx] = -1.0 / (rn * _LN2)
        offs = 1.0 / _LN2 - np.log2(rn)
        cons.append(ConeConstraint(row[None, :], np.array([offs]), NonnegCone(1), label))

    # convex quadratic upper bounds as SOCs: f^H Q f <= r - const
    for q_mat, const, r_idx, label in (
        (hw.mu_r * np.outer(c_u, c_u.conj()) + (1.0 + hw.mu_r) * hw.mu_t * np.diag(np.abs(c_u) ** 2),
         sig_u2, ir + 1, "quad-den-user"),
        (np.outer(c_e, c_e.conj()) + hw.mu_t * np.diag(np.abs(c_e) ** 2),
         noise.sigma2_e, ir + 2, "quad-num-eve"),
    ):
        r_rows = _psd_sqrt_rows(q_mat)
        k2 = 2 * r_rows.shape[0]
        f_soc = np.zeros((k2 + 2, nv))
        f_soc[0, r_idx] = 1.0
        f_soc[1:k2 + 1] = 2.0 * _complex_apply_rows(r_rows, nv)
        f_soc[k2 + 1, r_idx] = 1.0
        g_soc = np.zeros(k2 + 2)
        g_soc[0] = 1.0 - const
        g_soc[k2 + 1] = -1.0 - const
        cons.append(ConeConstraint(f_soc, g_soc, SecondOrderCone(k2 + 2), label))

    obj = np.zeros(nv)
    obj[ip:ip + 4] = [1.0, -1.0, -1.0, 1.0]
    prog = ConicProgram(nv, obj, tuple(cons))
    return BeamformerProgram(prog, tp, n)


@dataclass
class BeamformerStep:
    f: np.ndarray
    taylor: ActiveTaylorPoint
    surrogate: float | None
    solve_result: SolveResult
    equality_gap: float | None
    stalled: bool


def solve_f_step(f_prev: np.ndarray, e: np.ndarray, g_u: np.ndarray, g_e: np.ndarray,
                 hw: HardwareProfile, noise: NoiseConfig, p_max: float,
                 tol: float = 1e-8, backend: str | None = None) -> BeamformerStep:
    """One beamformer update: build at (f_prev, e), solve, keep f_prev on failure."""
    tp = taylor_point(f_prev, e, g_u, g_e, hw, noise)
    built = build_f_subproblem(tp, build_quadratic_forms(e, g_u, g_e, hw),
                               g_u, g_e, e, hw, noise, p_max)
    result = solve(built.program, tol=tol, backend=backend)
    if result.status != "optimal":
        return BeamformerStep(f_prev, tp, None, result, None, True)
    f_new, _, _ = built.extract(result.primal)
    nrm2 = float(np.real(np.vdot(f_new, f_new)))
    if nrm2 > p_max > 0:
        f_new = f_new * np.sqrt(p_max / nrm2)
    tp_next = taylor_point(f_new, e, g_u, g_e, hw, noise)
    return BeamformerStep(
        f_new, tp_next,
        built.surrogate_value(result.primal),
        result,
        float(built.equality_gaps(result.primal).max()),
        False,
    )
