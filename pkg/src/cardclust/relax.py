"""Builders turning a (possibly shrunk) clustering node into concrete SDP
instances, plus extraction of primal objects and named dual multipliers.

Two doubly-nonnegative relaxations are supported:

* vector lifting: k blocks of size (m+1), one per cluster, each carrying the
  cluster indicator and its outer-product surrogate;
* matrix lifting: one block of size (m+k) whose top-left corner is pinned to
  the diagonal matrix of cluster sizes.

Both accept super-point weights, cannot-link pairs on super points, and an
active pool of triangle cuts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cuts import Cut
from .data import CardinalitySpec
from .sdpcore import ConstraintBuilder, SdpProblem, SdpSolution

__all__ = [
    "VlPrimal",
    "MlPrimal",
    "VlDual",
    "MlDual",
    "build_vl",
    "build_ml",
    "build_pw",
    "build_al",
    "extract_vl",
    "extract_ml",
    "vl_dual_from_solution",
    "ml_dual_from_solution",
]


@dataclass(frozen=True)
class VlPrimal:
    pi: list[np.ndarray]   # k vectors of length m
    Pi: list[np.ndarray]   # k matrices m x m


@dataclass(frozen=True)
class MlPrimal:
    X: np.ndarray          # m x k
    Z: np.ndarray          # m x m


@dataclass(frozen=True)
class VlDual:
    y: np.ndarray                 # m
    alpha: np.ndarray             # k
    v: np.ndarray                 # k
    beta: np.ndarray              # k x m
    gamma: np.ndarray             # k x m
    V: list[np.ndarray]           # k matrices m x m, >= 0 after clamping
    cut_multipliers: np.ndarray   # lambda >= 0 for the <= rows
    cut_rhs: np.ndarray


@dataclass(frozen=True)
class MlDual:
    y1: np.ndarray                # m
    y2: np.ndarray                # k
    alpha1: np.ndarray            # m
    alpha2: np.ndarray            # m
    U: np.ndarray                 # m x k
    V: np.ndarray                 # m x m
    S11: np.ndarray               # k x k
    cut_multipliers: np.ndarray
    cut_rhs: np.ndarray


def _check_node(Ws, e, cards: CardinalitySpec, cannot_links):
    Ws = np.asarray(Ws, dtype=float)
    e = np.asarray(e, dtype=float)
    m = Ws.shape[0]
    if Ws.shape != (m, m) or e.shape != (m,):
        raise ValueError("weight vector and shrunk Gram matrix disagree")
    if int(round(e.sum())) != cards.n:
        raise ValueError("super point weights must sum to the total point count")
    cmax = max(cards.cards)
    if e.max() > cmax:
        raise ValueError("a super point exceeds every cluster size; node infeasible")
    for i, j in cannot_links:
        if not (0 <= i < m and 0 <= j < m and i != j):
            raise ValueError(f"bad cannot-link pair ({i},{j})")
    return Ws, e, m


def _add_triangle_rows(cb: ConstraintBuilder, cuts: list[Cut], kind_prefix: str, k: int, off):
    """Append one <= row per cut; `off(block, a, b)` maps point indices to
    block coordinates."""
    for cut in cuts:
        if cut.kind == "vl_tri_a":
            j, r, s, t = cut.indices
            row = cb.new_row(1.0)
            cb.add(row, j, *off(j, None, r), 1.0)
            cb.add(row, j, *off(j, None, s), 1.0)
            cb.add(row, j, *off(j, None, t), 1.0)
            cb.add(row, j, *off(j, r, s), -1.0)
            cb.add(row, j, *off(j, r, t), -1.0)
            cb.add(row, j, *off(j, s, t), -1.0)
        elif cut.kind == "vl_tri_b":
            j, r, s, t = cut.indices
            row = cb.new_row(0.0)
            cb.add(row, j, *off(j, r, s), 1.0)
            cb.add(row, j, *off(j, r, t), 1.0)
            cb.add(row, j, *off(j, None, r), -1.0)
            cb.add(row, j, *off(j, s, t), -1.0)
        elif cut.kind == "ml_tri_a":
            i, j = cut.indices
            row = cb.new_row(0.0)
            cb.add(row, 0, *off(0, i, j), 1.0)
            cb.add(row, 0, *off(0, i, i), -1.0)
        elif cut.kind == "ml_tri_b":
            i, j, h = cut.indices
            row = cb.new_row(0.0)
            cb.add(row, 0, *off(0, i, j), 1.0)
            cb.add(row, 0, *off(0, i, h), 1.0)
            cb.add(row, 0, *off(0, i, i), -1.0)
            cb.add(row, 0, *off(0, j, h), -1.0)
        else:
            raise ValueError(f"cut kind {cut.kind} does not belong to this relaxation")


def build_vl(Ws, e, cards: CardinalitySpec, cannot_links=(), cuts=(), trW: float | None = None) -> SdpProblem:
    """Vector-lifting relaxation on super points: k PSD blocks of size m+1."""
    Ws, e, m = _check_node(Ws, e, cards, cannot_links)
    k = cards.k
    if trW is None:
        trW = float(np.trace(Ws))  # only exact when e == 1
    dims = tuple([m + 1] * k)
    C = []
    for j in range(k):
        Cb = np.zeros((m + 1, m + 1))
        Cb[1:, 1:] = -Ws / cards.cards[j]
        C.append(Cb)

    cb = ConstraintBuilder(dims)
    slices = {}
    r0 = len(cb.rhs)
    for j in range(k):
        row = cb.new_row(1.0)
        cb.add(row, j, 0, 0, 1.0)
    slices["one"] = (r0, len(cb.rhs))

    r0 = len(cb.rhs)
    for i in range(m):
        row = cb.new_row(1.0)
        for j in range(k):
            cb.add(row, j, 0, i + 1, 1.0)
    slices["asg"] = (r0, len(cb.rhs))

    r0 = len(cb.rhs)
    for j in range(k):
        row = cb.new_row(float(cards.cards[j]))
        for i in range(m):
            cb.add(row, j, 0, i + 1, float(e[i]))
    slices["card"] = (r0, len(cb.rhs))

    r0 = len(cb.rhs)
    for j in range(k):
        for i in range(m):
            row = cb.new_row(0.0)
            cb.add(row, j, i + 1, i + 1, 1.0)
            cb.add(row, j, 0, i + 1, -1.0)
    slices["diag"] = (r0, len(cb.rhs))

    r0 = len(cb.rhs)
    for j in range(k):
        for i in range(m):
            row = cb.new_row(0.0)
            for t in range(m):
                cb.add(row, j, i + 1, t + 1, float(e[t]))
            cb.add(row, j, 0, i + 1, -float(cards.cards[j]))
    slices["rowsum"] = (r0, len(cb.rhs))

    cl = sorted(cannot_links)
    r0 = len(cb.rhs)
    for h in range(k):
        for (i, j) in cl:
            row = cb.new_row(0.0)
            cb.add(row, h, i + 1, j + 1, 1.0)
    slices["clzero"] = (r0, len(cb.rhs))
    A, b = cb.build()

    gb = ConstraintBuilder(dims)
    for h in range(k):
        for (i, j) in cl:
            row = gb.new_row(1.0)
            gb.add(row, h, 0, i + 1, 1.0)
            gb.add(row, h, 0, j + 1, 1.0)
    n_clpi = len(gb.rhs)

    def off(j, a, bq):
        if a is None:
            return (0, bq + 1)
        return (a + 1, bq + 1)

    _add_triangle_rows(gb, list(cuts), "vl", k, off)
    G, h = gb.build()
    if G.shape[0] == 0:
        G, h = None, None

    return SdpProblem(
        block_dims=dims,
        C=C,
        A=A,
        b=b,
        G=G,
        h=h,
        obj_const=trW,
        block_caps=tuple(float(c + 1) for c in cards.cards),
        meta={
            "kind": "vl",
            "m": m,
            "k": k,
            "slices": slices,
            "cards": cards,
            "e": e,
            "Ws": Ws,
            "n_structural_cuts": n_clpi,
            "cuts": list(cuts),
        },
    )


def build_ml(Ws, e, cards: CardinalitySpec, cannot_links=(), cuts=(), trW: float | None = None) -> SdpProblem:
    """Matrix-lifting relaxation on super points: one PSD block of size m+k."""
    Ws, e, m = _check_node(Ws, e, cards, cannot_links)
    k = cards.k
    if trW is None:
        trW = float(np.trace(Ws))
    d = m + k
    Cb = np.zeros((d, d))
    Cb[k:, k:] = -Ws
    cb = ConstraintBuilder((d,))
    slices = {}

    r0 = len(cb.rhs)
    for a in range(k):
        for bq in range(a, k):
            row = cb.new_row(float(cards.cards[a]) if a == bq else 0.0)
            cb.add(row, 0, a, bq, 1.0)
    slices["cblock"] = (r0, len(cb.rhs))

    r0 = len(cb.rhs)
    for i in range(m):
        row = cb.new_row(1.0)
        for h in range(k):
            cb.add(row, 0, h, k + i, 1.0)
    slices["asg"] = (r0, len(cb.rhs))

    r0 = len(cb.rhs)
    for h in range(k):
        row = cb.new_row(float(cards.cards[h]))
        for i in range(m):
            cb.add(row, 0, h, k + i, float(e[i]))
    slices["card"] = (r0, len(cb.rhs))

    r0 = len(cb.rhs)
    for i in range(m):
        row = cb.new_row(1.0)
        for t in range(m):
            cb.add(row, 0, k + i, k + t, float(e[t]))
    slices["zrow"] = (r0, len(cb.rhs))

    r0 = len(cb.rhs)
    for i in range(m):
        row = cb.new_row(0.0)
        cb.add(row, 0, k + i, k + i, 1.0)
        for h in range(k):
            cb.add(row, 0, h, k + i, -1.0 / cards.cards[h])
    slices["zdiag"] = (r0, len(cb.rhs))

    cl = sorted(cannot_links)
    r0 = len(cb.rhs)
    for (i, j) in cl:
        row = cb.new_row(0.0)
        cb.add(row, 0, k + i, k + j, 1.0)
    slices["clzero"] = (r0, len(cb.rhs))
    A, b = cb.build()

    gb = ConstraintBuilder((d,))
    for h in range(k):
        for (i, j) in cl:
            row = gb.new_row(1.0)
            gb.add(row, 0, h, k + i, 1.0)
            gb.add(row, 0, h, k + j, 1.0)
    n_clx = len(gb.rhs)

    def off(_, a, bq):
        return (k + a, k + bq)

    _add_triangle_rows(gb, list(cuts), "ml", k, off)
    G, h = gb.build()
    if G.shape[0] == 0:
        G, h = None, None

    return SdpProblem(
        block_dims=(d,),
        C=[Cb],
        A=A,
        b=b,
        G=G,
        h=h,
        obj_const=trW,
        block_caps=(float(max(cards.cards) + 1),),
        meta={
            "kind": "ml",
            "m": m,
            "k": k,
            "slices": slices,
            "cards": cards,
            "e": e,
            "Ws": Ws,
            "n_structural_cuts": n_clx,
            "cuts": list(cuts),
        },
    )


def build_pw(W, k: int) -> SdpProblem:
    """Size-oblivious relaxation: Z1=1, tr(Z)=k, Z PSD, Z >= 0."""
    W = np.asarray(W, dtype=float)
    n = W.shape[0]
    if not 1 <= k <= n:
        raise ValueError("k must be between 1 and n")
    cb = ConstraintBuilder((n,))
    for i in range(n):
        row = cb.new_row(1.0)
        for t in range(n):
            cb.add(row, 0, i, t, 1.0)
    row = cb.new_row(float(k))
    for i in range(n):
        cb.add(row, 0, i, i, 1.0)
    A, b = cb.build()
    return SdpProblem(
        block_dims=(n,),
        C=[-W],
        A=A,
        b=b,
        obj_const=float(np.trace(W)),
        block_caps=(1.0,),
        meta={"kind": "pw", "m": n, "k": k},
    )


def build_al(W, k: int) -> SdpProblem:
    """Balanced relaxation: Z1=1, diag(Z)=k/n, Z PSD, Z >= 0."""
    W = np.asarray(W, dtype=float)
    n = W.shape[0]
    if n % k != 0:
        raise ValueError("n must be divisible by k for the balanced relaxation")
    cb = ConstraintBuilder((n,))
    for i in range(n):
        row = cb.new_row(1.0)
        for t in range(n):
            cb.add(row, 0, i, t, 1.0)
    for i in range(n):
        row = cb.new_row(k / n)
        cb.add(row, 0, i, i, 1.0)
    A, b = cb.build()
    return SdpProblem(
        block_dims=(n,),
        C=[-W],
        A=A,
        b=b,
        obj_const=float(np.trace(W)),
        block_caps=(1.0,),
        meta={"kind": "al", "m": n, "k": k},
    )


def extract_vl(solution: SdpSolution, problem: SdpProblem) -> VlPrimal:
    meta = problem.meta
    if meta.get("kind") != "vl":
        raise ValueError("solution does not come from the vector-lifting builder")
    pis, Pis = [], []
    for B in solution.blocks:
        pis.append(B[0, 1:].copy())
        Pis.append(B[1:, 1:].copy())
    return VlPrimal(pi=pis, Pi=Pis)


def extract_ml(solution: SdpSolution, problem: SdpProblem) -> MlPrimal:
    meta = problem.meta
    if meta.get("kind") != "ml":
        raise ValueError("solution does not come from the matrix-lifting builder")
    m, k = meta["m"], meta["k"]
    B = solution.blocks[0]
    return MlPrimal(X=B[k:, :k].copy(), Z=B[k:, k:].copy())


def _slice(duals: np.ndarray, slices, name: str) -> np.ndarray:
    a, b = slices[name]
    return duals[a:b]


def vl_dual_from_solution(solution: SdpSolution, problem: SdpProblem) -> VlDual:
    meta = problem.meta
    m, k = meta["m"], meta["k"]
    sl = meta["slices"]
    y = _slice(solution.eq_duals, sl, "asg")
    alpha = _slice(solution.eq_duals, sl, "card")
    v = -_slice(solution.eq_duals, sl, "one")
    beta = _slice(solution.eq_duals, sl, "diag").reshape(k, m)
    gamma = _slice(solution.eq_duals, sl, "rowsum").reshape(k, m)
    V = [np.maximum(N[1:, 1:], 0.0) for N in solution.N_blocks]
    h = problem.h if problem.h is not None else np.zeros(0)
    return VlDual(
        y=y, alpha=alpha, v=v, beta=beta, gamma=gamma, V=V,
        cut_multipliers=solution.cut_multipliers, cut_rhs=np.asarray(h, dtype=float),
    )


def ml_dual_from_solution(solution: SdpSolution, problem: SdpProblem) -> MlDual:
    meta = problem.meta
    m, k = meta["m"], meta["k"]
    sl = meta["slices"]
    y1 = _slice(solution.eq_duals, sl, "asg")
    y2 = _slice(solution.eq_duals, sl, "card")
    alpha1 = _slice(solution.eq_duals, sl, "zrow")
    alpha2 = _slice(solution.eq_duals, sl, "zdiag")
    N = solution.N_blocks[0]
    U = np.maximum(2.0 * N[k:, :k], 0.0)
    V = np.maximum(N[k:, k:], 0.0)
    S11 = solution.S_blocks[0][:k, :k]
    h = problem.h if problem.h is not None else np.zeros(0)
    return MlDual(
        y1=y1, y2=y2, alpha1=alpha1, alpha2=alpha2, U=U, V=V, S11=S11,
        cut_multipliers=solution.cut_multipliers, cut_rhs=np.asarray(h, dtype=float),
    )
