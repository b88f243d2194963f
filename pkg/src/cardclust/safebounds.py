"""Certified lower bounds from approximate SDP solves.

Two post-processing routes are implemented and the larger result is used:

* error bound: plug the (cleaned) dual multipliers into the dual objective
  and compensate residual infeasibility of the PSD slack by a spectral
  penalty, weighted by an a-priori cap on the largest eigenvalue of any
  feasible primal block;
* LP repair: project the dual slack onto the PSD cone, freeze it, and
  re-optimize the remaining multipliers by a linear program whose feasibility
  yields an exactly dual-feasible point.

Both routes accept instances with cannot-link rows and active triangle cuts;
cut multipliers enter with their valid sign (clamped at zero).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .data import CardinalitySpec
from .relax import MlDual, VlDual
from .sdpcore import SdpProblem, SdpSolution, negative_eigenvalue_sum, project_psd, _svec, _smat

__all__ = [
    "SafeBound",
    "MINUS_INFINITY",
    "general_error_bound",
    "lp_dual_repair",
    "best_safe_bound",
    "error_bound_vl",
    "error_bound_ml",
    "eig_cap_ml",
]


@dataclass(frozen=True)
class SafeBound:
    value: float
    method: str          # error_bound | lp_repair | minus_infinity
    perturbation: float  # nonpositive spectral correction applied


MINUS_INFINITY = SafeBound(value=-np.inf, method="minus_infinity", perturbation=0.0)


def _clean_multipliers(problem: SdpProblem, solution: SdpSolution):
    y = np.asarray(solution.eq_duals, dtype=float)
    lam = np.asarray(solution.cut_multipliers, dtype=float)
    N = [np.maximum(Nb, 0.0) for Nb in solution.N_blocks]
    return y, lam, N


def _recompute_dual_slack(problem: SdpProblem, y, lam, N):
    """S := C - A*(y) + G*(lambda) - N, blockwise."""
    idx = problem.svec_idx()
    Cvec = np.concatenate([_svec(Cb, ix) for Cb, ix in zip(problem.C, idx)])
    svec_len = Cvec.shape[0]
    Avec = problem.A.T @ y
    Svec = Cvec - Avec[:svec_len]
    if problem.G is not None and len(lam):
        Gvec = problem.G.T @ lam
        Svec = Svec + Gvec[:svec_len]
    Nvec = np.concatenate([_svec(Nb, ix) for Nb, ix in zip(N, idx)])
    Svec = Svec - Nvec
    out = []
    ofs = 0
    for d, ix in zip(problem.block_dims, idx):
        ln = d * (d + 1) // 2
        out.append(_smat(Svec[ofs : ofs + ln], d, ix))
        ofs += ln
    return out


def general_error_bound(problem: SdpProblem, solution: SdpSolution) -> SafeBound:
    """Spectral error-bound certificate for any instance built by the
    relaxation builders (handles cuts and cannot-link rows)."""
    if problem.block_caps is None:
        raise ValueError("problem carries no eigenvalue caps")
    y, lam, N = _clean_multipliers(problem, solution)
    S = _recompute_dual_slack(problem, y, lam, N)
    base = float(problem.b @ y)
    if problem.h is not None and len(lam):
        base -= float(problem.h @ lam)
    pert = 0.0
    for cap, Sb in zip(problem.block_caps, S):
        pert += cap * negative_eigenvalue_sum(Sb)
    return SafeBound(value=problem.obj_const + base + pert, method="error_bound", perturbation=pert)


def lp_dual_repair(problem: SdpProblem, solution: SdpSolution, time_budget: float | None = None) -> SafeBound:
    """Freeze the PSD-projected dual slack and re-optimize the multipliers by
    a linear program; infeasibility falls back to minus infinity."""
    y0, lam0, N0 = _clean_multipliers(problem, solution)
    S = _recompute_dual_slack(problem, y0, lam0, N0)
    idx = problem.svec_idx()
    Sbar_vec = np.concatenate([_svec(project_psd(Sb), ix) for Sb, ix in zip(S, idx)])
    Cvec = np.concatenate([_svec(Cb, ix) for Cb, ix in zip(problem.C, idx)])

    p_eq = problem.A.shape[0]
    q = problem.n_cuts
    # maximize b'y - h'lam  s.t.  A^T y - G^T lam <= C - Sbar, lam >= 0
    cost = np.concatenate([-problem.b, problem.h if q else np.zeros(0)])
    A_ub = problem.A.T if q == 0 else sparse.hstack([problem.A.T, -problem.G.T])
    b_ub = Cvec - Sbar_vec
    bounds = [(None, None)] * p_eq + [(0, None)] * q
    options = {}
    if time_budget is not None:
        options["time_limit"] = float(time_budget)
    res = linprog(cost, A_ub=A_ub.tocsc(), b_ub=b_ub, bounds=bounds, method="highs", options=options)
    if res.status != 0:
        return MINUS_INFINITY
    return SafeBound(value=problem.obj_const - float(res.fun), method="lp_repair", perturbation=0.0)


def best_safe_bound(a: SafeBound, b: SafeBound) -> SafeBound:
    return a if a.value >= b.value else b


def eig_cap_ml(cards: CardinalitySpec) -> float:
    """Cap on the top eigenvalue of any feasible matrix-lifting block."""
    return float(max(cards.cards) + 1)


def error_bound_vl(dual: VlDual, cards: CardinalitySpec, Ws: np.ndarray, e: np.ndarray) -> SafeBound:
    """Named error bound for the vector-lifting dual (supports super-point
    weights; reduces to the textbook formula when e == 1)."""
    Ws = np.asarray(Ws, dtype=float)
    e = np.asarray(e, dtype=float)
    m = Ws.shape[0]
    k = cards.k
    lb = float(np.trace(Ws)) if getattr(dual, "trW", None) is None else dual.trW
    # objective constant handled by caller through trW of the full matrix:
    # here we only add the dual terms and the perturbation.
    total = dual.y.sum() + float(np.dot(dual.alpha, cards.as_array)) - dual.v.sum()
    if len(dual.cut_multipliers):
        total -= float(np.dot(dual.cut_multipliers, dual.cut_rhs))
    pert = 0.0
    for j in range(k):
        Vj = np.maximum(dual.V[j], 0.0)
        u = 0.5 * (-dual.y - dual.alpha[j] * e + dual.beta[j] + cards.cards[j] * dual.gamma[j])
        Sj = (
            -Ws / cards.cards[j]
            - np.diag(dual.beta[j])
            - 0.5 * np.outer(e, dual.gamma[j])
            - 0.5 * np.outer(dual.gamma[j], e)
            - Vj
        )
        Uj = np.zeros((m + 1, m + 1))
        Uj[0, 0] = dual.v[j]
        Uj[0, 1:] = u
        Uj[1:, 0] = u
        Uj[1:, 1:] = Sj
        pert += (cards.cards[j] + 1.0) * negative_eigenvalue_sum(Uj)
    return SafeBound(value=lb + total + pert, method="error_bound", perturbation=pert)


def error_bound_ml(dual: MlDual, cards: CardinalitySpec, Ws: np.ndarray, e: np.ndarray) -> SafeBound:
    """Named error bound for the matrix-lifting dual."""
    Ws = np.asarray(Ws, dtype=float)
    e = np.asarray(e, dtype=float)
    m = Ws.shape[0]
    k = cards.k
    c = cards.as_array
    U = np.maximum(dual.U, 0.0)
    V = np.maximum(dual.V, 0.0)
    S12 = 0.5 * (
        -np.outer(dual.y1, np.ones(k))
        - np.outer(e, dual.y2)
        + np.outer(dual.alpha2, 1.0 / c)
        - U
    )
    S22 = (
        -Ws
        - 0.5 * np.outer(dual.alpha1, e)
        - 0.5 * np.outer(e, dual.alpha1)
        - np.diag(dual.alpha2)
        - V
    )
    S = np.zeros((m + k, m + k))
    S[:k, :k] = dual.S11
    S[:k, k:] = S12.T
    S[k:, :k] = S12
    S[k:, k:] = S22
    total = (
        dual.y1.sum()
        + float(np.dot(dual.y2, c))
        + dual.alpha1.sum()
        - float(np.sum(c * np.diag(dual.S11)))
    )
    if len(dual.cut_multipliers):
        total -= float(np.dot(dual.cut_multipliers, dual.cut_rhs))
    pert = eig_cap_ml(cards) * negative_eigenvalue_sum(S)
    return SafeBound(value=float(np.trace(Ws)) + total + pert, method="error_bound", perturbation=pert)
