"""Exact Gibbs sampling of matchings by backward resolution of the transfer DP.

A matching of the cylinder decomposes layer by layer into the set S_i of
vertices matched forward by horizontal dimers and a fiber matching m_i
avoiding S_{i-1} and S_i.  The forward messages of the transfer DP give the
exact marginal weight of every partial configuration, so sampling the pairs
(S_{i-1}, m_i) backward from the last layer produces draws from the Gibbs
measure itself - no Markov chain, no mixing-time question.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphs import DOMAIN_GIBBS, CylinderGraph, RngSeed, WeightAssignment, rng_generator
from .transfer import NEG_INF, TransferEngine


@dataclass(frozen=True)
class Matching:
    """A matching as a frozenset of canonical edge indices."""

    edge_indices: frozenset

    def covered_flat(self, g: CylinderGraph) -> set[int]:
        edges = g.edge_list()
        out = set()
        for idx in self.edge_indices:
            u, v = edges[idx]
            fu, fv = g.flat_index(u), g.flat_index(v)
            if fu in out or fv in out:
                raise ValueError("edges share a vertex; not a matching")
            out.update((fu, fv))
        return out

    def unpaired(self, g: CylinderGraph) -> list[tuple[int, int]]:
        covered = self.covered_flat(g)
        return [v for v in g.vertices() if g.flat_index(v) not in covered]

    def num_unpaired(self, g: CylinderGraph) -> int:
        return g.num_vertices - 2 * len(self.edge_indices)


def matching_weight(g: CylinderGraph, w: WeightAssignment, m: Matching) -> float:
    """Hamiltonian H(m): monomer weights of unpaired vertices + dimer weights."""
    edges = g.edge_list()
    total = sum(w.omega_of(*edges[idx]) for idx in m.edge_indices)
    for v in m.unpaired(g):
        total += w.nu[v[0] - 1, v[1] - 1]
    return float(total)


@dataclass
class HeightSeries:
    """Cumulative unpaired counts theta(t) = U_[1:floor(nt)] on a t-grid."""

    t: np.ndarray
    theta: np.ndarray
    theta_hat: np.ndarray | None = None


@dataclass
class ObservableSet:
    U: int
    prefix: np.ndarray          # prefix[k] = unpaired count in layers 1..k
    height: HeightSeries


def observables(
    g: CylinderGraph,
    m: Matching,
    t_grid=None,
    centering: float | None = None,
) -> ObservableSet:
    """Monomer count, per-prefix counts, and the (optionally centered) height.

    With a centering constant u the scaled height (theta(t) - n t u) / sqrt(n)
    is attached; without it only the raw series is produced.
    """
    covered = m.covered_flat(g)
    per_layer = np.zeros(g.n, dtype=np.int64)
    for i in range(1, g.n + 1):
        per_layer[i - 1] = sum(
            1 for j in range(1, g.h + 1) if g.flat_index((i, j)) not in covered
        )
    prefix = np.concatenate([[0], np.cumsum(per_layer)])
    if t_grid is None:
        t_grid = np.linspace(0.0, 1.0, 9)
    t = np.asarray(t_grid, dtype=float)
    if (t < 0).any() or (t > 1).any():
        raise ValueError("t grid must lie in [0, 1]")
    theta = prefix[np.floor(g.n * t).astype(int)].astype(float)
    theta_hat = None
    if centering is not None:
        theta_hat = (theta - g.n * t * centering) / np.sqrt(g.n)
    return ObservableSet(
        U=int(prefix[-1]), prefix=prefix, height=HeightSeries(t, theta, theta_hat)
    )


class GibbsSampler:
    """Backward exact sampler with precomputed per-layer conditionals.

    Building the tables costs one forward DP pass; afterwards each draw is a
    cheap categorical walk, so large draw counts are vectorized across draws
    layer by layer.
    """

    def __init__(self, g: CylinderGraph, w: WeightAssignment, x: float = 0.0):
        self.g = g
        self.w = w
        self.x = x
        engine = TransferEngine(g, w, keep_scores=True)
        ht = engine.ht
        self.ht = ht
        msgs = engine.forward_messages(x)
        self.log_z = float(msgs[-1, 0])
        if self.log_z == NEG_INF:
            raise ValueError("partition function vanishes; nothing to sample")
        hsum = engine.tables["hsum"][0]
        scores = [s[0] + x * d for s, d in zip(engine.tables["scores"], engine.tables["dmat"])]
        n, states = g.n, ht.states

        # conditional tables: for layer i and current reserved set S, the
        # categorical over (previous reserved set, fiber matching index)
        self._cum = [[None] * states for _ in range(n)]
        self._decode = [[None] * states for _ in range(n)]
        for i in range(n):
            for S in range(states):
                if i == n - 1 and S != 0:
                    continue
                cats = []
                logits = []
                if i == 0:
                    blk = scores[S][:, 0]
                    for mi in range(blk.size):
                        cats.append((0, mi))
                        logits.append(blk[mi])
                else:
                    for Sp in ht.compat[S]:
                        blk = scores[Sp | S][:, i]
                        base = msgs[i - 1, Sp] + hsum[Sp, i - 1]
                        for mi in range(blk.size):
                            cats.append((int(Sp), mi))
                            logits.append(base + blk[mi])
                logits = np.asarray(logits)
                top = logits.max()
                if top == NEG_INF:
                    continue
                p = np.exp(logits - top)
                self._cum[i][S] = np.cumsum(p) / p.sum()
                self._decode[i][S] = cats

        # per-(F, matching) monomer counts, for height profiles
        self._mono_count = [mm.sum(axis=1).astype(np.int64) for mm in ht.match_mono]

    def draw_states(self, gen: np.random.Generator, count: int):
        """Sample (S_path, m_path) for ``count`` draws, vectorized per layer.

        Returns integer arrays of shape (count, n): the reserved set after
        each layer (always 0 at the last) and the fiber matching index per
        layer (indexing matchings that avoid S_{i-1} | S_i).
        """
        n, states = self.g.n, self.ht.states
        S_path = np.zeros((count, n), dtype=np.int64)
        m_path = np.zeros((count, n), dtype=np.int64)
        cur = np.zeros(count, dtype=np.int64)
        for i in range(n - 1, -1, -1):
            u = gen.random(count)
            nxt = np.zeros(count, dtype=np.int64)
            for S in np.unique(cur):
                sel = np.flatnonzero(cur == S)
                cum = self._cum[i][S]
                if cum is None:
                    raise ValueError("reached a zero-weight state during sampling")
                picks = np.searchsorted(cum, u[sel], side="right")
                picks = np.minimum(picks, len(cum) - 1)
                decode = self._decode[i][S]
                for k, d in zip(sel, picks):
                    sp, mi = decode[d]
                    nxt[k] = sp
                    m_path[k, i] = mi
            S_path[:, i] = cur
            cur = nxt
        return S_path, m_path

    def matchings_from_states(self, S_path: np.ndarray, m_path: np.ndarray) -> list[Matching]:
        g, ht = self.g, self.ht
        out = []
        for d in range(S_path.shape[0]):
            idxs = []
            prev = 0
            for i in range(g.n):
                S = int(S_path[d, i])
                F = prev | S
                for e in ht.edge_tuples[F][int(m_path[d, i])]:
                    idxs.append(g.vertical_index(i + 1, e))
                for j in range(g.h):
                    if S >> j & 1:
                        idxs.append(g.horizontal_index(i + 1, j + 1))
                prev = S
            out.append(Matching(frozenset(idxs)))
        return out

    def monomer_profiles(self, S_path: np.ndarray, m_path: np.ndarray) -> np.ndarray:
        """Unpaired-vertex count per layer for each draw, shape (count, n)."""
        ht = self.ht
        n = self.g.n
        count = S_path.shape[0]
        prof = np.zeros((count, n), dtype=np.int64)
        prev = np.zeros(count, dtype=np.int64)
        for i in range(n):
            S = S_path[:, i]
            F = prev | S
            mono = np.zeros(count, dtype=np.int64)
            for Fv in np.unique(F):
                sel = F == Fv
                mono[sel] = self._mono_count[Fv][m_path[sel, i]]
            prof[:, i] = mono
            prev = S
        return prof

    def draw_matchings(self, gen: np.random.Generator, count: int) -> list[Matching]:
        return self.matchings_from_states(*self.draw_states(gen, count))


def exact_sample(
    g: CylinderGraph, w: WeightAssignment, seed: RngSeed, count: int
) -> list[Matching]:
    """Draw ``count`` independent matchings from the Gibbs measure."""
    if count < 0:
        raise ValueError("count must be nonnegative")
    sampler = GibbsSampler(g, w)
    gen = rng_generator(seed, DOMAIN_GIBBS)
    return sampler.draw_matchings(gen, count)
