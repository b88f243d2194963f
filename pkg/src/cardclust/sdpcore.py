"""First-order subsolver for block-structured doubly-nonnegative SDPs.

Problems have the form

    min  sum_b <C_b, Y_b> + const
    s.t. sum_b <A_ib, Y_b>  = a_i        (equalities)
         sum_b <G_ib, Y_b> <= g_i        (inequality cuts)
         Y_b PSD,  Y_b >= 0 entrywise on the nonneg mask.

The solver is an operator-splitting (ADMM) scheme on the dual

    max a'y  s.t.  A*(y) + S + N = C,  S in PSD blocks,  N >= 0,

with inequality rows turned into equalities through slack variables living in
an auxiliary diagonal block. The primal matrix is the multiplier of the dual
feasibility constraint. Accuracy is measured by a relative KKT residual
(max of primal/dual infeasibility and scaled duality gap).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import factorized

__all__ = [
    "SdpProblem",
    "SdpSolution",
    "ConstraintBuilder",
    "solve",
    "project_psd",
    "negative_eigenvalue_sum",
]

_SQRT2 = np.sqrt(2.0)


def project_psd(M: np.ndarray) -> np.ndarray:
    """Frobenius-nearest positive semidefinite matrix (eigenvalue clamping)."""
    M = np.asarray(M, dtype=float)
    try:
        w, V = np.linalg.eigh(M)
    except np.linalg.LinAlgError:
        M = 0.5 * (M + M.T)
        w, V = np.linalg.eigh(M)
    w = np.maximum(w, 0.0)
    P = (V * w) @ V.T
    return 0.5 * (P + P.T)


def negative_eigenvalue_sum(M: np.ndarray) -> float:
    """Sum of the strictly negative eigenvalues (0 for PSD input)."""
    w = np.linalg.eigvalsh(np.asarray(M, dtype=float))
    return float(w[w < 0].sum())


def _svec_indices(d: int):
    iu, ju = np.triu_indices(d)
    scale = np.where(iu == ju, 1.0, _SQRT2)
    return iu, ju, scale


def _svec(M: np.ndarray, idx) -> np.ndarray:
    iu, ju, scale = idx
    return M[iu, ju] * scale


def _smat(v: np.ndarray, d: int, idx) -> np.ndarray:
    iu, ju, scale = idx
    M = np.zeros((d, d))
    M[iu, ju] = v / scale
    M[ju, iu] = M[iu, ju]
    return M


class ConstraintBuilder:
    """Accumulates linear rows sum_b <A_ib, Y_b> (= or <=) rhs over svec space.

    ``add(row, block, i, j, coeff)`` contributes ``coeff * Y_b[i, j]`` to the
    row (the symmetric entry is implied; do not add (j, i) separately).
    """

    def __init__(self, block_dims):
        self.block_dims = tuple(block_dims)
        self.offsets = np.concatenate([[0], np.cumsum([d * (d + 1) // 2 for d in self.block_dims])])
        self._coord = {}
        for b, d in enumerate(self.block_dims):
            iu, ju, _ = _svec_indices(d)
            lut = {}
            pos = 0
            for i, j in zip(iu, ju):
                lut[(int(i), int(j))] = pos
                pos += 1
            self._coord[b] = lut
        self.rows: list[int] = []
        self.cols: list[int] = []
        self.vals: list[float] = []
        self.rhs: list[float] = []

    @property
    def dim(self) -> int:
        return int(self.offsets[-1])

    def new_row(self, rhs: float) -> int:
        self.rhs.append(float(rhs))
        return len(self.rhs) - 1

    def add(self, row: int, block: int, i: int, j: int, coeff: float) -> None:
        if i > j:
            i, j = j, i
        pos = self.offsets[block] + self._coord[block][(i, j)]
        val = coeff if i == j else coeff / _SQRT2
        self.rows.append(row)
        self.cols.append(pos)
        self.vals.append(float(val))

    def build(self):
        A = sparse.csr_matrix(
            (self.vals, (self.rows, self.cols)), shape=(len(self.rhs), self.dim)
        )
        A.sum_duplicates()
        return A, np.array(self.rhs, dtype=float)


@dataclass
class SdpProblem:
    """Data of one doubly-nonnegative SDP instance."""

    block_dims: tuple[int, ...]
    C: list[np.ndarray]
    A: sparse.csr_matrix
    b: np.ndarray
    G: sparse.csr_matrix | None = None
    h: np.ndarray | None = None
    obj_const: float = 0.0
    nonneg_mask: list[np.ndarray | None] | None = None  # None = all entries >= 0
    block_caps: tuple[float, ...] | None = None  # lambda_max caps of feasible blocks
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.block_dims)
        self.block_dims = dims
        svec_len = sum(d * (d + 1) // 2 for d in dims)
        if len(self.C) != len(dims):
            raise ValueError("one cost matrix per block required")
        for d, Cb in zip(dims, self.C):
            if Cb.shape != (d, d):
                raise ValueError("cost matrix shape mismatch")
            if not np.allclose(Cb, Cb.T, atol=1e-9 * (1 + np.abs(Cb).max())):
                raise ValueError("cost matrices must be symmetric")
        if self.A.shape[1] != svec_len:
            raise ValueError("equality matrix has the wrong width")
        if self.A.shape[0] != len(self.b):
            raise ValueError("equality rhs length mismatch")
        if (self.G is None) != (self.h is None):
            raise ValueError("G and h must be given together")
        if self.G is not None:
            if self.G.shape[1] != svec_len:
                raise ValueError("cut matrix has the wrong width")
            if self.G.shape[0] != len(self.h):
                raise ValueError("cut rhs length mismatch")
        if not (np.all(np.isfinite(self.b)) and (self.h is None or np.all(np.isfinite(self.h)))):
            raise ValueError("non-finite right-hand side")

    @property
    def n_cuts(self) -> int:
        return 0 if self.G is None else self.G.shape[0]

    def svec_idx(self):
        return [_svec_indices(d) for d in self.block_dims]


@dataclass
class SdpSolution:
    """Approximate primal-dual pair returned by :func:`solve`."""

    blocks: list[np.ndarray]          # PSD-projected primal blocks
    raw_blocks: list[np.ndarray]      # unprojected primal iterate (warm starts)
    slack: np.ndarray                 # primal slack of the cut rows
    eq_duals: np.ndarray
    cut_duals: np.ndarray             # multipliers of the <= rows (<= 0 at feasibility)
    S_blocks: list[np.ndarray]        # PSD dual slack per block
    N_blocks: list[np.ndarray]        # nonnegativity multiplier per block
    primal_obj: float
    dual_obj: float
    kkt_residual: float
    residuals: dict
    iterations: int
    status: str                       # converged / iteration_limit / time_limit
    sigma: float

    @property
    def cut_multipliers(self) -> np.ndarray:
        """Valid-sign cut multipliers (lambda >= 0 for <= rows)."""
        return np.maximum(-self.cut_duals, 0.0)


def _stack_costs(problem: SdpProblem, idx, n_cuts: int) -> np.ndarray:
    parts = [_svec(Cb, ix) for Cb, ix in zip(problem.C, idx)]
    parts.append(np.zeros(n_cuts))
    return np.concatenate(parts)


def _split(vec: np.ndarray, dims, idx, n_cuts: int):
    out = []
    ofs = 0
    for d, ix in zip(dims, idx):
        ln = d * (d + 1) // 2
        out.append(_smat(vec[ofs : ofs + ln], d, ix))
        ofs += ln
    return out, vec[ofs : ofs + n_cuts]


def solve(
    problem: SdpProblem,
    tol: float = 1e-4,
    max_iter: int = 20000,
    time_limit: float | None = None,
    warm_start: SdpSolution | None = None,
    sigma0: float | None = None,
    check_every: int = 25,
) -> SdpSolution:
    """Run the operator-splitting scheme until the relative KKT residual
    drops below ``tol`` or a budget is exhausted."""
    t0 = time.monotonic()
    dims = problem.block_dims
    idx = problem.svec_idx()
    q = problem.n_cuts
    L = int(sum(d * (d + 1) // 2 for d in dims)) + q

    if q:
        M = sparse.bmat(
            [[problem.A, None], [problem.G, sparse.identity(q, format="csr")]], format="csr"
        )
        b_all = np.concatenate([problem.b, problem.h])
    else:
        M = problem.A.tocsr()
        b_all = problem.b.copy()
    p = M.shape[0]

    Cvec = _stack_costs(problem, idx, q)
    normC = max(1.0, np.linalg.norm(Cvec))
    Cs = Cvec / normC

    # per-row normalization
    rn = np.sqrt(np.asarray(M.multiply(M).sum(axis=1)).ravel())
    rn = np.where(rn > 1e-12, rn, 1.0)
    Rinv = sparse.diags(1.0 / rn)
    Ms = (Rinv @ M).tocsr()
    bs = b_all / rn
    Mst = Ms.T.tocsr()

    AAT = (Ms @ Mst).tocsc()
    reg = 1e-10
    AAT = AAT + reg * sparse.identity(p, format="csc")
    lin_solve = factorized(AAT)

    # state
    if warm_start is not None and tuple(d for d in dims) == tuple(
        Bk.shape[0] for Bk in warm_start.raw_blocks
    ):
        Xv = np.concatenate(
            [_svec(Bk, ix) for Bk, ix in zip(warm_start.raw_blocks, idx)] + [np.zeros(q)]
        )
        Sv = np.concatenate(
            [_svec(Bk, ix) / normC for Bk, ix in zip(warm_start.S_blocks, idx)] + [np.zeros(q)]
        )
        Nv = np.concatenate(
            [_svec(Bk, ix) / normC for Bk, ix in zip(warm_start.N_blocks, idx)] + [np.zeros(q)]
        )
        sigma = warm_start.sigma if sigma0 is None else sigma0
    else:
        Xv = np.zeros(L)
        Sv = np.zeros(L)
        Nv = np.zeros(L)
        sigma = 1.0 if sigma0 is None else sigma0

    tau = 1.618
    normb = 1.0 + np.linalg.norm(b_all)
    normCs = 1.0 + np.linalg.norm(Cs)

    def psd_part(vec: np.ndarray) -> np.ndarray:
        out = np.empty_like(vec)
        ofs = 0
        for d, ix in zip(dims, idx):
            ln = d * (d + 1) // 2
            Mx = _smat(vec[ofs : ofs + ln], d, ix)
            out[ofs : ofs + ln] = _svec(project_psd(Mx), ix)
            ofs += ln
        out[ofs:] = np.maximum(vec[ofs:], 0.0)
        return out

    status = "iteration_limit"
    it = 0
    kkt = np.inf
    resid = {}
    pobj = dobj = 0.0
    y = np.zeros(p)

    while it < max_iter:
        it += 1
        rhs = (bs - Ms @ Xv) / sigma + Ms @ (Cs - Sv - Nv)
        y = lin_solve(rhs)
        Aty = Mst @ y
        V1 = Cs - Aty - Xv / sigma
        Sv = psd_part(V1 - Nv)
        Nv = np.maximum(V1 - Sv, 0.0)
        Rd = Aty + Sv + Nv - Cs
        Xv = Xv + (tau * sigma) * Rd

        if it % check_every == 0 or it == max_iter:
            # residuals in original scale
            rp = M @ Xv - b_all
            eta_p = np.linalg.norm(rp) / normb
            eta_d = np.linalg.norm(Rd) / normCs
            pobj = float(Cvec @ Xv) + problem.obj_const
            dobj = float((bs * y).sum()) * normC + problem.obj_const
            eta_g = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
            # cone violations of X (psd + nonneg), measured relative to ||X||
            Xn = 1.0 + np.linalg.norm(Xv)
            neg = np.minimum(Xv, 0.0)
            eta_nn = np.linalg.norm(neg) / Xn
            eta_psd = 0.0
            ofs = 0
            for d, ix in zip(dims, idx):
                ln = d * (d + 1) // 2
                w = np.linalg.eigvalsh(_smat(Xv[ofs : ofs + ln], d, ix))
                eta_psd = max(eta_psd, np.linalg.norm(np.minimum(w, 0.0)) / Xn)
                ofs += ln
            kkt = max(eta_p, eta_d, eta_g, eta_psd, eta_nn)
            resid = {
                "primal": eta_p,
                "dual": eta_d,
                "gap": eta_g,
                "psd": eta_psd,
                "nonneg": eta_nn,
            }
            if kkt <= tol:
                status = "converged"
                break
            if abs(dobj) > 1e13 * (1.0 + abs(pobj)):
                raise FloatingPointError("dual objective diverging; problem looks unbounded")
            if time_limit is not None and time.monotonic() - t0 > time_limit:
                status = "time_limit"
                break
            # penalty balancing
            if it % (4 * check_every) == 0:
                ratio = eta_p / max(eta_d, 1e-16)
                if ratio > 5.0:
                    sigma = min(sigma * 1.35, 1e8)
                elif ratio < 0.2:
                    sigma = max(sigma / 1.35, 1e-8)

    raw_blocks, slack = _split(Xv, dims, idx, q)
    S_blocks, _ = _split(Sv * normC, dims, idx, q)
    N_blocks, _ = _split(Nv * normC, dims, idx, q)
    blocks = [project_psd(Bk) for Bk in raw_blocks]
    y_orig = normC * (y / rn)
    eq_duals = y_orig[: problem.A.shape[0]]
    cut_duals = y_orig[problem.A.shape[0] :]

    return SdpSolution(
        blocks=blocks,
        raw_blocks=raw_blocks,
        slack=slack,
        eq_duals=eq_duals,
        cut_duals=cut_duals,
        S_blocks=S_blocks,
        N_blocks=N_blocks,
        primal_obj=pobj,
        dual_obj=dobj,
        kkt_residual=float(kkt),
        residuals=resid,
        iterations=it,
        status=status,
        sigma=sigma,
    )
