"""Solver-agnostic cone programs over zero/nonneg/SOC/PSD/exponential cones.

A program is `maximize c.x subject to F_i x + g_i in K_i`. PSD cones use the
scaled triangular vectorization (upper triangle, column-major, off-diagonals
times sqrt 2), so svec is an isometry and the cone is self-dual in
coordinates. Hermitian blocks enter through the exact real 2d x 2d embedding.

Two interchangeable backends discharge the solve: Clarabel (interior point,
default) and SCS (operator splitting, cheaper on large PSD blocks). Optimality
is never taken from the backend alone: every solve is re-audited by the
independent KKT checker below and downgraded if the residuals exceed the
requested tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
import scipy.sparse as sp

_LN2 = np.log(2.0)
_SQRT2 = np.sqrt(2.0)

Matrix = Union[np.ndarray, sp.spmatrix]


# ---------------------------------------------------------------------------
# cones
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ZeroCone:
    dim: int

    @property
    def rows(self) -> int:
        return self.dim


@dataclass(frozen=True)
class NonnegCone:
    dim: int

    @property
    def rows(self) -> int:
        return self.dim


@dataclass(frozen=True)
class SecondOrderCone:
    """dim-length membership (t, u): t >= ||u||."""

    dim: int

    @property
    def rows(self) -> int:
        return self.dim


@dataclass(frozen=True)
class PsdCone:
    """Real symmetric PSD cone of matrix order `order`, svec coordinates."""

    order: int

    @property
    def rows(self) -> int:
        return self.order * (self.order + 1) // 2


@dataclass(frozen=True)
class ExpCone:
    """(x, y, z) with y exp(x/y) <= z, y > 0 (closure at y = 0)."""

    @property
    def rows(self) -> int:
        return 3


Cone = Union[ZeroCone, NonnegCone, SecondOrderCone, PsdCone, ExpCone]


@dataclass(frozen=True)
class ConeConstraint:
    F: Matrix
    g: np.ndarray
    cone: Cone
    label: str = ""

    def __post_init__(self):
        if self.F.shape[0] != self.cone.rows or self.g.shape != (self.cone.rows,):
            raise ValueError(
                f"constraint '{self.label}': map has {self.F.shape[0]} rows, "
                f"cone expects {self.cone.rows}")


@dataclass(frozen=True)
class ConicProgram:
    """maximize objective.x  s.t.  F_i x + g_i in K_i for every constraint."""

    n_vars: int
    objective: np.ndarray
    constraints: tuple[ConeConstraint, ...]

    def __post_init__(self):
        if self.objective.shape != (self.n_vars,):
            raise ValueError("objective length must equal the variable count")
        for c in self.constraints:
            if c.F.shape[1] != self.n_vars:
                raise ValueError(f"constraint '{c.label}' has wrong column count")

    def dump(self, path: str) -> None:
        """Write the program as sparse triplets for offline cross-checking.

        Line format: `o col value` for objective nonzeros, then per constraint
        a header `# constraint idx cone rows label` followed by `c idx row col
        value` for map nonzeros and `g idx row value` for nonzero offsets.
        Rows are local to their constraint block.
        """
        with open(path, "w") as fh:
            fh.write(f"# conic program: nvars={self.n_vars} nconstraints={len(self.constraints)}\n")
            for j in np.nonzero(self.objective)[0]:
                fh.write(f"o {j} {self.objective[j]!r}\n")
            for idx, c in enumerate(self.constraints):
                cone = c.cone
                name = type(cone).__name__
                fh.write(f"# constraint {idx} {name} rows={cone.rows} label={c.label}\n")
                coo = sp.coo_matrix(c.F)
                for r, col, v in zip(coo.row, coo.col, coo.data):
                    fh.write(f"c {idx} {r} {col} {v!r}\n")
                for r in np.nonzero(c.g)[0]:
                    fh.write(f"g {idx} {r} {c.g[r]!r}\n")


@dataclass
class SolveResult:
    status: str                       # optimal | infeasible | unbounded | numerical-failure
    primal: np.ndarray | None
    duals: list[np.ndarray] | None
    objective_value: float | None
    max_kkt_residual: float
    backend: str = ""
    iterations: int = 0
    detail: str = ""


# ---------------------------------------------------------------------------
# symmetric / Hermitian vectorization helpers
# ---------------------------------------------------------------------------

def svec_index(p: int, q: int) -> int:
    """Position of entry (p, q), p <= q, in column-major upper-triangle order."""
    return q * (q + 1) // 2 + p


def svec(mat: np.ndarray) -> np.ndarray:
    d = mat.shape[0]
    out = np.empty(d * (d + 1) // 2)
    for q in range(d):
        for p in range(q + 1):
            out[svec_index(p, q)] = mat[p, q] * (1.0 if p == q else _SQRT2)
    return out


def smat(vec: np.ndarray, order: int) -> np.ndarray:
    out = np.zeros((order, order))
    for q in range(order):
        for p in range(q + 1):
            v = vec[svec_index(p, q)]
            if p == q:
                out[p, p] = v
            else:
                out[p, q] = out[q, p] = v / _SQRT2
    return out


def hermitian_embed(h: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Exact real embedding [[Re H, -Im H], [Im H, Re H]] of a Hermitian H.

    The embedding preserves definiteness; each eigenvalue of H appears twice.
    """
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError("input must be square")
    scale = max(1.0, float(np.abs(h).max()) if h.size else 1.0)
    if np.abs(h - h.conj().T).max(initial=0.0) > tol * scale:
        raise ValueError("input is not Hermitian within tolerance")
    h = (h + h.conj().T) / 2.0
    a, b = h.real, h.imag
    return np.block([[a, -b], [b, a]])


# ---------------------------------------------------------------------------
# cone membership violations (shared by the KKT audit and tangency checks)
# ---------------------------------------------------------------------------

def _exp_primal_violation(x: float, y: float, z: float) -> float:
    if y > 0 and z > 0:
        return max(0.0, x - y * np.log(z / y))
    if y > 0:  # z <= 0 cannot dominate y*exp(x/y) > 0
        return y * np.exp(min(x / y, 500.0)) - z
    return max(0.0, x) + max(0.0, -z) + max(0.0, -y)


def _exp_dual_violation(u: float, v: float, w: float) -> float:
    if u < 0 and w > 0:
        return max(0.0, u * (1.0 + np.log(w / -u)) - v)
    if u < 0:  # w <= 0 cannot dominate -u*exp(v/u) > 0
        return (-u) * np.exp(min(v / u, 500.0)) - np.e * w
    return max(0.0, u) + max(0.0, -v) + max(0.0, -w)


def cone_violation(cone: Cone, s: np.ndarray) -> float:
    """Raw membership violation of s in the (primal) cone."""
    if isinstance(cone, ZeroCone):
        return float(np.abs(s).max(initial=0.0))
    if isinstance(cone, NonnegCone):
        return float(max(0.0, -s.min(initial=0.0)))
    if isinstance(cone, SecondOrderCone):
        return float(max(0.0, np.linalg.norm(s[1:]) - s[0]))
    if isinstance(cone, PsdCone):
        w = np.linalg.eigvalsh(smat(s, cone.order))
        return float(max(0.0, -w[0]))
    if isinstance(cone, ExpCone):
        return float(_exp_primal_violation(s[0], s[1], s[2]))
    raise TypeError(f"unknown cone {cone}")


def _block_scale(cone: Cone, fx: np.ndarray, g: np.ndarray, s: np.ndarray) -> float:
    """Natural magnitude of a constraint block for relative residuals.

    PSD blocks use the slack matrix's spectral norm (the standard yardstick
    for relative PSD-ness); other cones use the largest entry of the affine
    map's input/output.
    """
    if isinstance(cone, PsdCone):
        w = np.linalg.eigvalsh(smat(s, cone.order))
        return 1.0 + max(abs(float(w[0])), abs(float(w[-1])))
    return 1.0 + max(float(np.abs(fx).max(initial=0.0)),
                     float(np.abs(g).max(initial=0.0)),
                     float(np.abs(s).max(initial=0.0)))


def dual_cone_violation(cone: Cone, z: np.ndarray) -> float:
    if isinstance(cone, ZeroCone):
        return 0.0  # dual of {0} is everything
    if isinstance(cone, (NonnegCone, SecondOrderCone, PsdCone)):
        return cone_violation(cone, z)  # self-dual
    if isinstance(cone, ExpCone):
        return float(_exp_dual_violation(z[0], z[1], z[2]))
    raise TypeError(f"unknown cone {cone}")


def evaluate_violations(program: ConicProgram, x: np.ndarray) -> list[float]:
    """Per-constraint membership violations of a candidate point (unscaled)."""
    out = []
    for c in program.constraints:
        s = np.asarray(c.F @ x).ravel() + c.g
        out.append(cone_violation(c.cone, s))
    return out


# ---------------------------------------------------------------------------
# KKT audit
# ---------------------------------------------------------------------------

@dataclass
class KktReport:
    stationarity: float
    duality_gap: float
    primal_violations: list[float]
    dual_violations: list[float]
    labels: list[str]

    @property
    def max_residual(self) -> float:
        pieces = [self.stationarity, self.duality_gap]
        pieces += self.primal_violations + self.dual_violations
        return float(max(pieces))


def check_kkt(program: ConicProgram, result: SolveResult) -> KktReport:
    """Recompute optimality residuals from (primal, duals) alone.

    Residuals are relative to the data that produced them: each cone violation
    is scaled by its block's natural magnitude (see _block_scale), stationarity
    by 1 + |c|_inf, and the complementarity gap by 1 + |objective value|.
    """
    if result.primal is None or result.duals is None:
        raise ValueError("KKT audit needs a primal/dual pair")
    x = result.primal
    c = program.objective
    grad = c.astype(float).copy()
    gap = 0.0
    primal_v, dual_v, labels = [], [], []
    for cons, z in zip(program.constraints, result.duals):
        fx = np.asarray(cons.F @ x).ravel()
        s = fx + cons.g
        primal_v.append(cone_violation(cons.cone, s) / _block_scale(cons.cone, fx, cons.g, s))
        dual_v.append(dual_cone_violation(cons.cone, z)
                      / _block_scale(cons.cone, z, np.zeros(1), z))
        labels.append(cons.label)
        grad += np.asarray(cons.F.T @ z).ravel()
        gap += float(s @ z)
    stat = float(np.abs(grad).max(initial=0.0)) / (1.0 + float(np.abs(c).max(initial=0.0)))
    obj = float(c @ x)
    return KktReport(
        stationarity=stat,
        duality_gap=abs(gap) / (1.0 + abs(obj)),
        primal_violations=primal_v,
        dual_violations=dual_v,
        labels=labels,
    )


# ---------------------------------------------------------------------------
# backends
# ---------------------------------------------------------------------------

def _stack(program: ConicProgram, order: Sequence[int]):
    """Stack -F / g blocks in the given constraint order (A x + s = b form)."""
    blocks = [program.constraints[i] for i in order]
    mats = [sp.csc_matrix(-c.F if sp.issparse(c.F) else -np.asarray(c.F)) for c in blocks]
    a = sp.vstack(mats, format="csc")
    b = np.concatenate([c.g for c in blocks])
    return a, b


def _split_dual(program: ConicProgram, order: Sequence[int], z: np.ndarray) -> list[np.ndarray]:
    duals: list[np.ndarray | None] = [None] * len(program.constraints)
    pos = 0
    for i in order:
        r = program.constraints[i].cone.rows
        duals[i] = np.asarray(z[pos:pos + r], dtype=float)
        pos += r
    return duals  # type: ignore[return-value]


def _solve_clarabel(program: ConicProgram, tol: float) -> SolveResult:
    import clarabel

    order = list(range(len(program.constraints)))
    a, b = _stack(program, order)
    q = -program.objective.astype(float)

    cones = []
    for i in order:
        cone = program.constraints[i].cone
        if isinstance(cone, ZeroCone):
            cones.append(clarabel.ZeroConeT(cone.dim))
        elif isinstance(cone, NonnegCone):
            cones.append(clarabel.NonnegativeConeT(cone.dim))
        elif isinstance(cone, SecondOrderCone):
            cones.append(clarabel.SecondOrderConeT(cone.dim))
        elif isinstance(cone, PsdCone):
            cones.append(clarabel.PSDTriangleConeT(cone.order))
        elif isinstance(cone, ExpCone):
            cones.append(clarabel.ExponentialConeT())

    settings = clarabel.DefaultSettings()
    settings.verbose = False
    target = min(tol * 1e-2, 1e-8)   # leave headroom below the acceptance gate
    settings.tol_gap_abs = target
    settings.tol_gap_rel = target
    settings.tol_feas = target
    solver = clarabel.DefaultSolver(sp.csc_matrix((program.n_vars, program.n_vars)), q, a, b, cones, settings)
    sol = solver.solve()
    status = str(sol.status)

    if status in ("Solved", "AlmostSolved"):
        x = np.asarray(sol.x)
        return SolveResult(
            status="optimal",
            primal=x,
            duals=_split_dual(program, order, np.asarray(sol.z)),
            objective_value=float(program.objective @ x),
            max_kkt_residual=np.inf,  # filled in by the caller's audit
            backend="clarabel",
            iterations=int(sol.iterations),
            detail=status,
        )
    if status in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        return SolveResult("infeasible", None, None, None, np.inf, "clarabel", int(sol.iterations), status)
    if status in ("DualInfeasible", "AlmostDualInfeasible"):
        return SolveResult("unbounded", None, None, None, np.inf, "clarabel", int(sol.iterations), status)
    return SolveResult("numerical-failure", None, None, None, np.inf, "clarabel", int(sol.iterations), status)


_SCS_GROUPS = (ZeroCone, NonnegCone, SecondOrderCone, PsdCone, ExpCone)


def _scs_psd_permutation(order: int) -> np.ndarray:
    """Row permutation from our upper-column-major svec to SCS lower-column-major."""
    perm = np.empty(order * (order + 1) // 2, dtype=int)
    pos = 0
    for j in range(order):
        for i in range(j, order):
            perm[pos] = svec_index(j, i)
            pos += 1
    return perm


def _solve_scs(program: ConicProgram, tol: float,
               warm: SolveResult | None = None,
               polished: bool = False) -> SolveResult:
    import scs

    # SCS wants constraint groups in the fixed order zero, nonneg, soc, psd, exp
    order = []
    for group in _SCS_GROUPS:
        order += [i for i, c in enumerate(program.constraints) if isinstance(c.cone, group)]
    a, b = _stack(program, order)

    # permute PSD blocks into SCS's lower-triangular convention
    perm = np.arange(a.shape[0])
    pos = 0
    cone = dict(z=0, l=0, q=[], s=[], ep=0)
    for i in order:
        k = program.constraints[i].cone
        if isinstance(k, ZeroCone):
            cone["z"] += k.dim
        elif isinstance(k, NonnegCone):
            cone["l"] += k.dim
        elif isinstance(k, SecondOrderCone):
            cone["q"].append(k.dim)
        elif isinstance(k, PsdCone):
            cone["s"].append(k.order)
            perm[pos:pos + k.rows] = pos + _scs_psd_permutation(k.order)
        elif isinstance(k, ExpCone):
            cone["ep"] += 1
        pos += k.rows
    a = a[perm]
    b = b[perm]
    cone = {k: v for k, v in cone.items() if (v if not isinstance(v, list) else len(v))}

    # an exact-feasibility polish downstream tolerates a looser operator split
    eps_abs = tol * 5.0 if polished else tol * 0.5
    eps_rel = tol if polished else tol * 1e-1
    try:
        solver = scs.SCS(
            dict(A=a, b=b, c=-program.objective.astype(float)),
            cone,
            verbose=False,
            eps_abs=eps_abs,
            eps_rel=eps_rel,
            eps_infeas=1e-9,
            max_iters=100_000,
        )
        if warm is not None and warm.primal is not None and warm.duals is not None:
            # a, b are already in scs row order here; scs row r is our row perm[r]
            x0 = warm.primal
            y0 = np.concatenate([warm.duals[i] for i in order])[perm]
            s0 = b - np.asarray(a @ x0).ravel()
            sol = solver.solve(warm_start=True, x=x0, y=y0, s=s0)
        else:
            sol = solver.solve()
    except Exception as exc:  # malformed numerics inside scs
        return SolveResult("numerical-failure", None, None, None, np.inf, "scs", 0, repr(exc))

    status = sol["info"]["status"]
    iters = int(sol["info"]["iter"])
    if status == "solved":
        x = np.asarray(sol["x"])
        z = np.empty_like(sol["y"])
        z[perm] = sol["y"]  # back to our row order
        return SolveResult(
            status="optimal",
            primal=x,
            duals=_split_dual(program, order, z),
            objective_value=float(program.objective @ x),
            max_kkt_residual=np.inf,
            backend="scs",
            iterations=iters,
            detail=status,
        )
    if "infeasible" in status:
        return SolveResult("infeasible", None, None, None, np.inf, "scs", iters, status)
    if "unbounded" in status:
        return SolveResult("unbounded", None, None, None, np.inf, "scs", iters, status)
    return SolveResult("numerical-failure", None, None, None, np.inf, "scs", iters, status)


# PSD blocks above this svec row count route to SCS: Clarabel's direct KKT
# factorization grows cubically in the triangle size and dominates runtime.
PSD_ROWS_SCS_THRESHOLD = 800


def choose_backend(program: ConicProgram) -> str:
    psd_rows = sum(c.cone.rows for c in program.constraints if isinstance(c.cone, PsdCone))
    return "scs" if psd_rows >= PSD_ROWS_SCS_THRESHOLD else "clarabel"


def solve(program: ConicProgram, tol: float = 1e-8, backend: str | None = None,
          warm: SolveResult | None = None,
          polish=None) -> SolveResult:
    """Solve the program and audit the reported optimum.

    A backend "solved" claim is only accepted if the independent KKT residuals
    come in at or below `tol`; otherwise the result is downgraded to
    numerical-failure. Never raises on solver trouble.

    `warm` threads a previous SolveResult of a structurally identical program
    into the scs backend as a starting point. `polish` is an optional map from
    a near-feasible primal to an exactly feasible one (problem-specific); when
    given, the audited primal is whichever of raw/polished has the smaller
    residual.
    """
    if backend is not None:
        return _solve_one(program, tol, backend, warm, polish)
    primary = choose_backend(program)
    result = _solve_one(program, tol, primary, warm, polish)
    if result.status != "numerical-failure":
        return result
    other = "scs" if primary == "clarabel" else "clarabel"
    retry = _solve_one(program, tol, other, warm, polish)
    if retry.status != "numerical-failure":
        return retry
    # neither passed: keep the attempt with the smaller audited residual
    return retry if retry.max_kkt_residual < result.max_kkt_residual else result


def _solve_one(program: ConicProgram, tol: float, backend: str,
               warm: SolveResult | None, polish=None) -> SolveResult:
    if backend == "clarabel":
        result = _solve_clarabel(program, tol)
    elif backend == "scs":
        result = _solve_scs(program, tol, warm=warm, polished=polish is not None)
    else:
        raise ValueError(f"unknown backend '{backend}'")

    if result.status == "optimal":
        report = check_kkt(program, result)
        result.max_kkt_residual = report.max_residual
        if polish is not None:
            candidate = SolveResult("optimal", polish(result.primal), result.duals,
                                    None, np.inf)
            cand_report = check_kkt(program, candidate)
            if cand_report.max_residual < report.max_residual:
                result.primal = candidate.primal
                result.objective_value = float(program.objective @ candidate.primal)
                result.max_kkt_residual = cand_report.max_residual
        if result.max_kkt_residual > tol:
            result.status = "numerical-failure"
            result.detail += f" (kkt residual {result.max_kkt_residual:.2e} > {tol:.1e})"
    return result
