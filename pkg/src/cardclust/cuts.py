"""Triangle-inequality separation and cut-pool lifecycle.

Vector-lifting cuts come in two families per cluster j over distinct triplets
(r, s, t):

    a:  pi_r + pi_s + pi_t <= Pi_rs + Pi_rt + Pi_st + 1
    b:  Pi_rs + Pi_rt      <= pi_r + Pi_st

Matrix-lifting cuts over pairs/triplets of super points:

    a:  Z_ij        <= Z_ii
    b:  Z_ij + Z_ih <= Z_ii + Z_jh

All are valid for every hard assignment; the separators return instances
violated by more than ``violation_tol`` at the current relaxation solution.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "Cut",
    "CutPool",
    "separate_vl",
    "separate_ml",
    "update_pool",
    "cp_should_stop",
    "DEFAULT_VIOLATION_TOL",
    "DEFAULT_MAX_FOUND",
    "DEFAULT_ADD_FRACTION",
]

DEFAULT_VIOLATION_TOL = 1e-4
DEFAULT_MAX_FOUND = 100_000
DEFAULT_ADD_FRACTION = 0.10
FULL_ENUM_LIMIT = 300
SAMPLE_BUDGET_FACTOR = 20


@dataclass(frozen=True)
class Cut:
    kind: str                 # vl_tri_a | vl_tri_b | ml_tri_a | ml_tri_b
    indices: tuple[int, ...]  # (j, r, s, t) for vl, (i, j) or (i, j, h) for ml
    violation: float

    def key(self):
        return (self.kind, self.indices)


@dataclass(frozen=True)
class CutPool:
    active: tuple[Cut, ...] = ()
    added_total: int = 0
    purged_total: int = 0

    def keys(self):
        return {c.key() for c in self.active}

    def __len__(self):
        return len(self.active)


def _sorted_cuts(found: list[Cut]) -> list[Cut]:
    return sorted(found, key=lambda c: (-c.violation, c.kind, c.indices))


def _triplets(m: int, rng: np.random.Generator | None, budget: int):
    """All distinct triplet index arrays (r < s < t), enumerated densely for
    small m and sampled uniformly otherwise."""
    if m <= FULL_ENUM_LIMIT:
        r, s, t = np.array(
            np.meshgrid(np.arange(m), np.arange(m), np.arange(m), indexing="ij")
        ).reshape(3, -1)
        mask = (r < s) & (s < t)
        return r[mask], s[mask], t[mask]
    if rng is None:
        rng = np.random.default_rng(0)
    cols = rng.integers(0, m, size=(3, budget))
    mask = (cols[0] < cols[1]) & (cols[1] < cols[2])
    return cols[0][mask], cols[1][mask], cols[2][mask]


def separate_vl(
    primal,
    max_found: int = DEFAULT_MAX_FOUND,
    violation_tol: float = DEFAULT_VIOLATION_TOL,
    rng: np.random.Generator | None = None,
) -> list[Cut]:
    """Violated triangle inequalities of both vector-lifting families."""
    found: list[Cut] = []
    k = len(primal.pi)
    m = len(primal.pi[0])
    budget = SAMPLE_BUDGET_FACTOR * max_found // max(k, 1)
    r, s, t = _triplets(m, rng, budget)
    for j in range(k):
        pi, Pi = primal.pi[j], primal.Pi[j]
        va = pi[r] + pi[s] + pi[t] - Pi[r, s] - Pi[r, t] - Pi[s, t] - 1.0
        for pos in np.flatnonzero(va > violation_tol):
            found.append(Cut("vl_tri_a", (j, int(r[pos]), int(s[pos]), int(t[pos])), float(va[pos])))
        # family b: each of the three apex choices
        for apex, o1, o2 in ((r, s, t), (s, r, t), (t, r, s)):
            vb = Pi[apex, o1] + Pi[apex, o2] - pi[apex] - Pi[o1, o2]
            for pos in np.flatnonzero(vb > violation_tol):
                a, b1, b2 = int(apex[pos]), int(o1[pos]), int(o2[pos])
                if b1 > b2:
                    b1, b2 = b2, b1
                found.append(Cut("vl_tri_b", (j, a, b1, b2), float(vb[pos])))
        if len(found) >= max_found:
            break
    return _sorted_cuts(found)[:max_found]


def separate_ml(
    Z: np.ndarray,
    max_found: int = DEFAULT_MAX_FOUND,
    violation_tol: float = DEFAULT_VIOLATION_TOL,
    rng: np.random.Generator | None = None,
) -> list[Cut]:
    """Violated triangle inequalities on the co-membership surrogate Z."""
    Z = np.asarray(Z, dtype=float)
    m = Z.shape[0]
    found: list[Cut] = []
    d = np.diag(Z)
    va = Z - d[:, None]
    ii, jj = np.nonzero(va > violation_tol)
    for i, j in zip(ii, jj):
        if i != j:
            found.append(Cut("ml_tri_a", (int(i), int(j)), float(va[i, j])))
    r, s, t = _triplets(m, rng, SAMPLE_BUDGET_FACTOR * max_found)
    for apex, o1, o2 in ((r, s, t), (s, r, t), (t, r, s)):
        vb = Z[apex, o1] + Z[apex, o2] - d[apex] - Z[o1, o2]
        for pos in np.flatnonzero(vb > violation_tol):
            a, b1, b2 = int(apex[pos]), int(o1[pos]), int(o2[pos])
            if b1 > b2:
                b1, b2 = b2, b1
            found.append(Cut("ml_tri_b", (a, b1, b2), float(vb[pos])))
        if len(found) >= max_found:
            break
    return _sorted_cuts(found)[:max_found]


def update_pool(
    pool: CutPool,
    found: list[Cut],
    cut_slacks: np.ndarray | None = None,
    cut_multipliers: np.ndarray | None = None,
    add_fraction: float = DEFAULT_ADD_FRACTION,
    inactive_tol: float = DEFAULT_VIOLATION_TOL,
    min_add: int = 1,
) -> CutPool:
    """Purge inactive cuts, then append the most violated fraction of ``found``.

    ``cut_slacks``/``cut_multipliers`` refer to the pool's cuts at the last
    solve (in pool order); a cut is inactive when its slack exceeds
    ``inactive_tol`` while its multiplier stays below it.
    """
    active = list(pool.active)
    purged = 0
    if cut_slacks is not None and cut_multipliers is not None and len(active):
        keep = []
        for cut, slack, lam in zip(active, cut_slacks, cut_multipliers):
            if slack > inactive_tol and abs(lam) < inactive_tol:
                purged += 1
            else:
                keep.append(cut)
        active = keep
    existing = {c.key() for c in active}
    ranked = _sorted_cuts(list(found))
    n_add = max(min_add, int(np.ceil(add_fraction * len(ranked)))) if ranked else 0
    added = 0
    for cut in ranked:
        if added >= n_add:
            break
        if cut.key() in existing:
            continue
        active.append(replace(cut))
        existing.add(cut.key())
        added += 1
    return CutPool(
        active=tuple(active),
        added_total=pool.added_total + added,
        purged_total=pool.purged_total + purged,
    )


def cp_should_stop(prev_lb: float, new_lb: float, n_found: int, rel_tol: float = 1e-4) -> bool:
    """Stop the cutting-plane loop when separation is empty or the bound
    stagnates."""
    if n_found == 0:
        return True
    return (new_lb - prev_lb) / max(1.0, abs(new_lb)) < rel_tol
