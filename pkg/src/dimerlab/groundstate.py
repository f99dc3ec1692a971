"""Zero-temperature engine: maximal Hamiltonian over matchings.

The layer DP of the transfer module turns into a ground-state solver by
replacing (logsumexp, +) with (max, +).  Backpointers through the same
(reserved set, fiber matching) blocks reconstruct one optimal matching;
ties are broken by the canonical enumeration order of the blocks so the
argmax is deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphs import CylinderGraph, WeightAssignment
from .sampler import Matching, matching_weight
from .transfer import NEG_INF, _dp_final, batch_tables, restrict, scalar_log_z


@dataclass(frozen=True)
class GroundState:
    value: float
    matching: Matching

    def monomer_count(self, g: CylinderGraph) -> int:
        return g.num_vertices - 2 * len(self.matching.edge_indices)


def batch_max_values(g: CylinderGraph, nu_b, oh_b, ov_b) -> np.ndarray:
    """Max Hamiltonian per replica, vectorized; no argmax reconstruction."""
    tables = batch_tables(g, nu_b, oh_b, ov_b, keep_scores=True)
    ht = tables["ht"]
    R, n = np.asarray(nu_b).shape[0], tables["n"]
    Wmax = np.full((R, ht.states, n), NEG_INF)
    for F in range(ht.states):
        Wmax[:, F, :] = tables["scores"][F].max(axis=1)
    return _dp_final(Wmax, tables["hsum"], ht, np.maximum)


def max_weight(g: CylinderGraph, w: WeightAssignment) -> GroundState:
    """Maximize H over matchings by a (max, +) pass with backpointers."""
    tables = batch_tables(g, w.nu[None], w.omega_h[None], w.omega_v[None], keep_scores=True)
    ht = tables["ht"]
    n = g.n
    scores = [s[0] for s in tables["scores"]]       # per F: (m_F, n)
    hsum = tables["hsum"][0]                        # (states, n-1)

    Wmax = np.full((ht.states, n), NEG_INF)
    Warg = np.zeros((ht.states, n), dtype=np.int64)
    for F in range(ht.states):
        Wmax[F] = scores[F].max(axis=0)
        Warg[F] = scores[F].argmax(axis=0)

    # v[S] = best value of the first i+1 layers ending in reserved set S
    v = Wmax[:, 0]
    back = np.zeros((n, ht.states), dtype=np.int64)  # chosen previous set
    for i in range(1, n):
        nv = np.full(ht.states, NEG_INF)
        nb = np.zeros(ht.states, dtype=np.int64)
        for Sp in range(ht.states):
            idx = ht.compat[Sp]
            cand = v[idx] + hsum[idx, i - 1] + Wmax[idx | Sp, i]
            a = int(np.argmax(cand))
            nv[Sp] = cand[a]
            nb[Sp] = idx[a]
        v = nv
        back[i] = nb

    value = float(v[0])
    # reconstruct reserved sets backward, then matchings forward
    S_path = np.zeros(n, dtype=np.int64)
    cur = 0
    for i in range(n - 1, 0, -1):
        S_path[i] = cur
        cur = back[i, cur]
    S_path[0] = cur

    idxs = []
    prev = 0
    for i in range(n):
        S = int(S_path[i])
        F = prev | S
        for e in ht.edge_tuples[F][int(Warg[F, i])]:
            idxs.append(g.vertical_index(i + 1, e))
        for j in range(g.h):
            if S >> j & 1:
                idxs.append(g.horizontal_index(i + 1, j + 1))
        prev = S
    gs = GroundState(value=value, matching=Matching(frozenset(idxs)))
    achieved = matching_weight(g, w, gs.matching)
    if not np.isclose(achieved, value, rtol=0.0, atol=1e-9):
        raise AssertionError(f"argmax reconstruction mismatch: {achieved} vs {value}")
    return gs


def brute_force_max(g: CylinderGraph, w: WeightAssignment) -> float:
    """Enumeration reference for the maximum, small instances only."""
    from .transfer import BRUTE_MAX_N, CapacityError

    if g.num_vertices > BRUTE_MAX_N:
        raise CapacityError(f"brute force supports at most {BRUTE_MAX_N} vertices")
    total = g.num_vertices
    nu_flat = w.nu_flat()
    adj: list[list[tuple[int, float]]] = [[] for _ in range(total)]
    for (u, v) in g.edge_list():
        fu, fv = g.flat_index(u), g.flat_index(v)
        wt = w.omega_of(u, v)
        adj[fu].append((fv, wt))
        adj[fv].append((fu, wt))
    best = NEG_INF

    def rec(start, used, weight):
        nonlocal best
        vtx = start
        while vtx < total and used >> vtx & 1:
            vtx += 1
        if vtx == total:
            best = max(best, weight)
            return
        bit = 1 << vtx
        rec(vtx + 1, used | bit, weight + nu_flat[vtx])
        for u, wt in adj[vtx]:
            if not used >> u & 1:
                rec(vtx + 1, used | bit | 1 << u, weight + wt)

    rec(0, 0, 0.0)
    return float(best)


def gse_remainder(g: CylinderGraph, w: WeightAssignment, k: int) -> float:
    """Superadditivity gap M_n - M_[1:k] - M_[k+1:n] of the ground state."""
    if not (1 <= k < g.n):
        raise ValueError(f"cut k={k} must satisfy 1 <= k < n={g.n}")
    full = max_weight(g, w).value
    lg, lw, _ = restrict(g, w, 1, k)
    rg, rw, _ = restrict(g, w, k + 1, g.n)
    return full - max_weight(lg, lw).value - max_weight(rg, rw).value


def gse_remainder_bound(g: CylinderGraph, w: WeightAssignment, k: int) -> float:
    """Sum of positive parts of the gauge weights across the cut.

    Dropping the cut dimers of a global optimum and leaving their endpoints
    unpaired costs exactly the gauge weight of each dropped dimer, so the
    gap never exceeds the positive part summed over the cut.
    """
    z = w.gauge_h[k - 1]
    finite = np.isfinite(z)
    return float(np.sum(np.clip(z[finite], 0.0, None)))


@dataclass
class ZeroTemperatureLadder:
    betas: np.ndarray
    free_energies: np.ndarray   # beta^{-1} log Z_beta
    gaps: np.ndarray            # free energy minus ground-state value
    ground_value: float


def ground_zero_temperature_limit(
    g: CylinderGraph, w: WeightAssignment, betas
) -> ZeroTemperatureLadder:
    """Track beta^{-1} log Z at inverse temperature beta down to the maximum.

    Scaling every weight by beta and reheating by beta^{-1} interpolates
    between free energy (beta=1) and the ground-state value (beta=inf);
    the gap column is always nonnegative and shrinks like beta^{-1}.
    """
    betas = np.asarray(betas, dtype=float)
    if (betas <= 0).any():
        raise ValueError("beta values must be positive")
    M = max_weight(g, w).value
    vals = []
    for b in betas:
        scaled = WeightAssignment(g, b * w.nu, b * w.omega_h, b * w.omega_v)
        vals.append(scalar_log_z(g, scaled) / b)
    vals = np.array(vals)
    return ZeroTemperatureLadder(betas, vals, vals - M, ground_value=M)
