"""Exact partition-function computations by transfer over layers.

The central object is the monomer-count polynomial

    Z(x) = sum_j a_j exp(j x),

where a_j collects exp(H(m)) over all matchings m whose number of unpaired
vertices inside a counting mask equals j.  All coefficient arithmetic is
done in log space so that instances with hundreds of layers stay inside
float64 range.

Two evaluation modes share one layer-by-layer dynamic program:

* polynomial mode keeps the full coefficient vector (fiber size capped at
  ``POLY_MAX_H``), enabling exact cumulants and Lee-Yang spectra;
* scalar mode fixes the tilt x and propagates a single number per DP state
  (fiber size capped at ``SCALAR_MAX_H``), which is what the large replica
  campaigns use.

The DP state after layer i is the set S of layer-i vertices reserved for a
horizontal dimer into layer i+1.  A transition into layer i+1 sums over the
new reserved set S', the horizontal dimers dictated by S, and all matchings
of the fiber graph avoiding S and S'; leftover vertices are monomers.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import logsumexp

from .graphs import CylinderGraph, HGraph, WeightAssignment

POLY_MAX_H = 6
POLY_MAX_N = 1024
SCALAR_MAX_H = 12
BRUTE_MAX_N = 22

NEG_INF = -np.inf


class CapacityError(ValueError):
    """An instance exceeds a documented size cap."""


# ---------------------------------------------------------------------------
# counting masks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CountingMask:
    """Subset of vertices whose unpaired status is counted by the tilt."""

    kind: str
    lo: int = 0
    hi: int = 0
    vertices: frozenset = field(default_factory=frozenset)

    @classmethod
    def all(cls) -> "CountingMask":
        return cls("all")

    @classmethod
    def layer_range(cls, k: int, l: int) -> "CountingMask":
        if k < 1 or l < k:
            raise ValueError(f"bad layer range [{k}:{l}]")
        return cls("layers", lo=k, hi=l)

    @classmethod
    def vertex_set(cls, vs) -> "CountingMask":
        return cls("vertices", vertices=frozenset(vs))

    def to_array(self, g: CylinderGraph) -> np.ndarray:
        arr = np.zeros((g.n, g.h))
        if self.kind == "all":
            arr[:] = 1.0
        elif self.kind == "layers":
            if self.hi > g.n:
                raise ValueError(f"layer range [{self.lo}:{self.hi}] exceeds n={g.n}")
            arr[self.lo - 1 : self.hi, :] = 1.0
        else:
            for v in self.vertices:
                i, j = v
                arr[i - 1, j - 1] = 1.0
        return arr


def _resolve_mask(g: CylinderGraph, mask) -> np.ndarray:
    if mask is None:
        return np.ones((g.n, g.h))
    if isinstance(mask, CountingMask):
        return mask.to_array(g)
    arr = np.asarray(mask, dtype=float)
    if arr.shape != (g.n, g.h):
        raise ValueError(f"mask shape {arr.shape} != {(g.n, g.h)}")
    if not np.isin(arr, (0.0, 1.0)).all():
        raise ValueError("mask entries must be 0 or 1")
    return arr


# ---------------------------------------------------------------------------
# monomer-count polynomials
# ---------------------------------------------------------------------------

class MonomerPolynomial:
    """Coefficients of Z(x) = sum_j a_j exp(j x), stored as log a_j.

    ``N`` is the vertex count of the generating graph and ``mask_size`` the
    number of counted vertices; the coefficient index j runs from 0 to
    ``mask_size``.  Entries equal to -inf mark vanishing coefficients.
    """

    def __init__(self, log_coeffs, N: int, mask_size: int | None = None):
        lc = np.asarray(log_coeffs, dtype=float)
        if mask_size is None:
            mask_size = lc.size - 1
        if lc.size != mask_size + 1:
            raise ValueError(f"need {mask_size + 1} coefficients, got {lc.size}")
        if np.isnan(lc).any() or (lc == np.inf).any():
            raise ValueError("log coefficients contain NaN or +inf")
        self.log_coeffs = lc
        self.N = int(N)
        self.mask_size = int(mask_size)

    @classmethod
    def from_coeffs(cls, coeffs, N: int) -> "MonomerPolynomial":
        c = np.asarray(coeffs, dtype=float)
        if (c < 0).any():
            raise ValueError("coefficients must be nonnegative")
        with np.errstate(divide="ignore"):
            return cls(np.log(c), N)

    def log_z(self, x: float = 0.0) -> float:
        return float(logsumexp(self.log_coeffs + np.arange(self.mask_size + 1) * x))

    def pmf(self, x: float = 0.0) -> np.ndarray:
        """Distribution of the masked monomer count under the Gibbs measure."""
        lw = self.log_coeffs + np.arange(self.mask_size + 1) * x
        top = lw.max()
        if top == NEG_INF:
            raise ValueError("all coefficients vanish; empty Gibbs measure")
        p = np.exp(lw - top)
        return p / p.sum()

    def cumulants(self, x: float = 0.0, order: int = 2) -> tuple[float, ...]:
        """First cumulants of the masked monomer count (order up to 4)."""
        if not 1 <= order <= 4:
            raise ValueError(f"cumulant order must be 1..4, got {order}")
        p = self.pmf(x)
        j = np.arange(self.mask_size + 1, dtype=float)
        k1 = float(p @ j)
        out = [k1]
        if order >= 2:
            c = j - k1
            m2 = float(p @ c**2)
            out.append(m2)
        if order >= 3:
            out.append(float(p @ c**3))
        if order >= 4:
            m4 = float(p @ c**4)
            out.append(m4 - 3.0 * m2**2)
        return tuple(out)

    def is_monic(self, tol: float = 1e-9) -> bool:
        return self.mask_size == self.N and abs(self.log_coeffs[-1]) <= tol

    def to_payload(self) -> dict:
        return {
            "N": self.N,
            "mask_size": self.mask_size,
            "log_coeffs": [None if v == NEG_INF else float(v) for v in self.log_coeffs],
        }

    @classmethod
    def from_payload(cls, d: dict) -> "MonomerPolynomial":
        lc = [NEG_INF if v is None else float(v) for v in d["log_coeffs"]]
        return cls(lc, int(d["N"]), int(d["mask_size"]))

    def __repr__(self):
        return f"MonomerPolynomial(N={self.N}, mask_size={self.mask_size})"


def log_Z(p: MonomerPolynomial, x: float = 0.0) -> float:
    return p.log_z(x)


def cumulants_U(p: MonomerPolynomial, x: float = 0.0, order: int = 2) -> tuple[float, ...]:
    return p.cumulants(x, order)


# ---------------------------------------------------------------------------
# fiber matching tables (combinatorial structure, cached per H)
# ---------------------------------------------------------------------------

class _HTables:
    def __init__(self, H: HGraph):
        h = H.h
        self.h = h
        self.states = 1 << h
        self.mH = len(H.edges)
        edges0 = [(a - 1, b - 1) for a, b in H.edges]
        full = self.states - 1

        self.match_edges = []   # per F: (m_F, mH) 0/1
        self.match_mono = []    # per F: (m_F, h) 0/1, monomer = not in F, not covered
        self.edge_tuples = []   # per F: tuple of H-edge index tuples
        self.mono_bits = []     # per F: int bitmask of monomer vertices per matching
        for F in range(self.states):
            rows = []

            def rec(eidx, used, chosen):
                if eidx == len(edges0):
                    rows.append((tuple(chosen), used))
                    return
                rec(eidx + 1, used, chosen)
                a, b = edges0[eidx]
                if not (used >> a & 1) and not (used >> b & 1):
                    chosen.append(eidx)
                    rec(eidx + 1, used | 1 << a | 1 << b, chosen)
                    chosen.pop()

            rec(0, F, [])
            me = np.zeros((len(rows), self.mH))
            mm = np.zeros((len(rows), h))
            bits = []
            for r, (chosen, used) in enumerate(rows):
                for e in chosen:
                    me[r, e] = 1.0
                mono = full & ~used
                bits.append(mono)
                for j in range(h):
                    if mono >> j & 1:
                        mm[r, j] = 1.0
            self.match_edges.append(me)
            self.match_mono.append(mm)
            self.edge_tuples.append(tuple(chosen for chosen, _ in rows))
            self.mono_bits.append(np.array(bits, dtype=np.int64))

        # disjoint (S, S') pairs grouped contiguously by S', for segmented
        # reductions in the layer transition
        ps, psp, pf, starts = [], [], [], []
        for Sp in range(self.states):
            starts.append(len(ps))
            for S in range(self.states):
                if S & Sp == 0:
                    ps.append(S)
                    psp.append(Sp)
                    pf.append(S | Sp)
        self.pair_s = np.array(ps, dtype=np.intp)
        self.pair_f = np.array(pf, dtype=np.intp)
        self.group_starts = np.array(starts, dtype=np.intp)
        self.compat = [self.pair_s[self.group_starts[Sp]:
                                   (self.group_starts[Sp + 1] if Sp + 1 < self.states else len(ps))]
                       for Sp in range(self.states)]

        self.sbits = np.zeros((self.states, h))
        for S in range(self.states):
            for j in range(h):
                if S >> j & 1:
                    self.sbits[S, j] = 1.0
        self.popcount = self.sbits.sum(axis=1).astype(np.int64)


@lru_cache(maxsize=64)
def _h_tables(H: HGraph) -> _HTables:
    return _HTables(H)


# ---------------------------------------------------------------------------
# per-instance weight tables (batched over replicas)
# ---------------------------------------------------------------------------

def _indicator_sum(spec: str, sel: np.ndarray, arr: np.ndarray) -> np.ndarray:
    """einsum of a 0/1 selector with log weights, -inf sentinel aware.

    A plain einsum would produce 0 * -inf = NaN for disabled entries, so
    those are zeroed out of the product and re-imposed afterwards.
    """
    if np.isneginf(arr).any():
        clean = np.where(arr == NEG_INF, 0.0, arr)
        out = np.einsum(spec, sel, clean)
        dead = np.einsum(spec, sel, (arr == NEG_INF).astype(float)) > 0.5
        out[dead] = NEG_INF
        return out
    return np.einsum(spec, sel, arr)


def _block_scores(ht: _HTables, F: int, nu_b: np.ndarray, ov_b: np.ndarray) -> np.ndarray:
    """Log weight of each fiber matching avoiding F, per replica and layer.

    Includes the vertical dimer weights and the monomer weights of layer
    vertices left unpaired; shape (R, m_F, n).
    """
    s = _indicator_sum("me,rne->rmn", ht.match_edges[F], ov_b)
    s = s + _indicator_sum("mv,rnv->rmn", ht.match_mono[F], nu_b)
    return s


def batch_tables(g: CylinderGraph, nu_b, oh_b, ov_b, mask=None, keep_scores: bool = False) -> dict:
    """Layer-transition tables for a batch of weight assignments.

    ``B[r, F, i, d]`` aggregates (log-sum-exp) the fiber blocks of layer i
    with forbidden set F over matchings leaving exactly d masked monomers.
    ``hsum[r, S, k]`` is the total horizontal dimer weight of reserved set S
    at cut k.  With ``keep_scores`` the per-matching block scores are kept
    for consumers that resolve individual fiber matchings (exact sampling,
    ground-state argmax).
    """
    ht = _h_tables(g.H)
    mask_arr = _resolve_mask(g, mask)
    nu_b = np.asarray(nu_b, dtype=float)
    oh_b = np.asarray(oh_b, dtype=float)
    ov_b = np.asarray(ov_b, dtype=float)
    R, n, h = nu_b.shape
    B = np.full((R, ht.states, n, h + 1), NEG_INF)
    all_scores: list[np.ndarray] = []
    all_dmat: list[np.ndarray] = []
    for F in range(ht.states):
        scores = _block_scores(ht, F, nu_b, ov_b)
        dmat = (ht.match_mono[F] @ mask_arr.T).astype(np.int64)  # (m_F, n)
        for d in range(h + 1):
            sel = np.where(dmat == d, 0.0, NEG_INF)
            with np.errstate(invalid="ignore"):
                B[:, F, :, d] = logsumexp(scores + sel[None, :, :], axis=1)
        if keep_scores:
            all_scores.append(scores)
            all_dmat.append(dmat)
    if n > 1:
        hsum = _indicator_sum("sj,rkj->rsk", ht.sbits, oh_b)
    else:
        hsum = np.zeros((R, ht.states, 0))
    out = {"B": B, "hsum": hsum, "ht": ht, "n": n, "h": h}
    if keep_scores:
        out["scores"] = all_scores
        out["dmat"] = all_dmat
    return out


def _tilted_W(tables: dict, x: float) -> np.ndarray:
    """Collapse the d axis at tilt x: W[r, F, i] = lse_d(B[...,d] + x d)."""
    h = tables["h"]
    return logsumexp(tables["B"] + x * np.arange(h + 1), axis=-1)


def _dp_final(W: np.ndarray, hsum: np.ndarray, ht: _HTables, ufunc) -> np.ndarray:
    """Run the layer DP with a segmented reduction, returning f_n(empty)."""
    n = W.shape[2]
    v = W[:, :, 0]
    for i in range(1, n):
        t = v[:, ht.pair_s] + hsum[:, ht.pair_s, i - 1] + W[:, ht.pair_f, i]
        v = ufunc.reduceat(t, ht.group_starts, axis=1)
    return v[:, 0]


def batch_scalar_log_z(tables: dict, x: float = 0.0) -> np.ndarray:
    return _dp_final(_tilted_W(tables, x), tables["hsum"], tables["ht"], np.logaddexp)


# ---------------------------------------------------------------------------
# single-instance engine
# ---------------------------------------------------------------------------

class TransferEngine:
    """Transfer DP for one weight assignment, reusable across tilts."""

    def __init__(self, g: CylinderGraph, w: WeightAssignment, mask=None, keep_scores: bool = False):
        if g.h > SCALAR_MAX_H:
            raise CapacityError(
                f"transfer supports fiber size h <= {SCALAR_MAX_H}, got h={g.h}"
            )
        if w.g != g:
            raise ValueError("weight assignment belongs to a different graph")
        self.g = g
        self.w = w
        self.mask_arr = _resolve_mask(g, mask)
        self.mask_size = int(round(self.mask_arr.sum()))
        self.tables = batch_tables(
            g, w.nu[None], w.omega_h[None], w.omega_v[None], self.mask_arr,
            keep_scores=keep_scores,
        )
        self.ht: _HTables = self.tables["ht"]

    def log_z(self, x: float = 0.0) -> float:
        return float(batch_scalar_log_z(self.tables, x)[0])

    def forward_messages(self, x: float = 0.0) -> np.ndarray:
        """Log forward messages msgs[i, S] = log f_{i+1}(S), for sampling."""
        W = _tilted_W(self.tables, x)[0]     # (states, n)
        hsum = self.tables["hsum"][0]        # (states, n-1)
        ht = self.ht
        n = self.g.n
        msgs = np.full((n, ht.states), NEG_INF)
        v = W[:, 0]
        msgs[0] = v
        for i in range(1, n):
            t = v[ht.pair_s] + hsum[ht.pair_s, i - 1] + W[ht.pair_f, i]
            v = np.logaddexp.reduceat(t, ht.group_starts)
            msgs[i] = v
        return msgs

    def polynomial(self) -> MonomerPolynomial:
        g = self.g
        if g.h > POLY_MAX_H:
            raise CapacityError(
                f"polynomial mode supports fiber size h <= {POLY_MAX_H}, got h={g.h}"
            )
        if g.n > POLY_MAX_N:
            raise CapacityError(
                f"polynomial mode supports n <= {POLY_MAX_N} layers, got n={g.n}"
            )
        ht = self.ht
        B = self.tables["B"][0]       # (states, n, h+1)
        hsum = self.tables["hsum"][0]
        M = self.mask_size
        h, n = g.h, g.n
        dmax = min(h, M)
        V = np.full((ht.states, M + 1), NEG_INF)
        V[:, : dmax + 1] = B[:, 0, : dmax + 1]
        for i in range(1, n):
            NV = np.full((ht.states, M + 1), NEG_INF)
            for Sp in range(ht.states):
                idx = ht.compat[Sp]
                base = hsum[idx, i - 1]
                for d in range(dmax + 1):
                    add = base + B[idx | Sp, i, d]
                    if np.all(add == NEG_INF):
                        continue
                    red = np.logaddexp.reduce(V[idx] + add[:, None], axis=0)
                    NV[Sp, d:] = np.logaddexp(NV[Sp, d:], red[: M + 1 - d])
            V = NV
        return MonomerPolynomial(V[0], N=g.num_vertices, mask_size=M)


def partition_polynomial(g: CylinderGraph, w: WeightAssignment, mask=None) -> MonomerPolynomial:
    """Exact monomer-count polynomial of the Gibbs partition function."""
    return TransferEngine(g, w, mask).polynomial()


def scalar_log_z(g: CylinderGraph, w: WeightAssignment, x: float = 0.0, mask=None) -> float:
    """log Z at a fixed tilt without materializing coefficients."""
    return TransferEngine(g, w, mask).log_z(x)


# ---------------------------------------------------------------------------
# brute-force oracle (independent of the DP above)
# ---------------------------------------------------------------------------

def brute_force_polynomial(
    g: CylinderGraph, w: WeightAssignment, mask=None, removed=()
) -> MonomerPolynomial:
    """Enumerate every matching directly; the reference oracle for tests.

    Kept deliberately simple: vertices are processed in canonical order and
    each one either stays a monomer or pairs with a free neighbor, which
    visits every matching exactly once.
    """
    removed = [g.flat_index(v) for v in removed]
    N = g.num_vertices - len(removed)
    if N > BRUTE_MAX_N:
        raise CapacityError(
            f"brute force supports at most {BRUTE_MAX_N} vertices, got {N}"
        )
    mask_flat = _resolve_mask(g, mask).reshape(-1)
    total = g.num_vertices
    nu_flat = w.nu_flat()
    adj: list[list[tuple[int, float]]] = [[] for _ in range(total)]
    for (u, v) in g.edge_list():
        fu, fv = g.flat_index(u), g.flat_index(v)
        wt = w.omega_of(u, v)
        adj[fu].append((fv, wt))
        adj[fv].append((fu, wt))

    M = int(round(sum(mask_flat[i] for i in range(total) if i not in removed)))
    best = np.full(M + 1, NEG_INF)   # running max exponent per coefficient
    sums = np.zeros(M + 1)           # sum of exp(H - best) per coefficient
    removed_bits = 0
    for r in removed:
        removed_bits |= 1 << r
    done_all = (1 << total) - 1

    def leaf(count: int, weight: float):
        if weight == NEG_INF:  # disabled edge or vertex; contributes nothing
            return
        b = best[count]
        if weight > b:
            sums[count] = sums[count] * np.exp(b - weight) + 1.0 if b > NEG_INF else 1.0
            best[count] = weight
        else:
            sums[count] += np.exp(weight - b)

    def rec(start: int, used: int, count: int, weight: float):
        v = start
        while v < total and used >> v & 1:
            v += 1
        if v == total:
            leaf(count, weight)
            return
        bit = 1 << v
        rec(v + 1, used | bit, count + int(mask_flat[v]), weight + nu_flat[v])
        for u, wt in adj[v]:
            if not used >> u & 1:
                rec(v + 1, used | bit | 1 << u, count, weight + wt)

    rec(0, removed_bits, 0, 0.0)
    with np.errstate(divide="ignore"):
        log_coeffs = best + np.log(sums, where=sums > 0, out=np.full(M + 1, NEG_INF))
    return MonomerPolynomial(log_coeffs, N=N, mask_size=M)


# ---------------------------------------------------------------------------
# restrictions, vertex removal, remainders
# ---------------------------------------------------------------------------

def restrict(g: CylinderGraph, w: WeightAssignment, k: int, l: int, mask=None):
    """Induced sub-cylinder on layers k..l with sliced weights and mask."""
    if not (1 <= k <= l <= g.n):
        raise ValueError(f"layer range [{k}:{l}] not inside [1:{g.n}]")
    sub_g = CylinderGraph(l - k + 1, g.H)
    sub_w = WeightAssignment(
        sub_g,
        w.nu[k - 1 : l],
        w.omega_h[k - 1 : l - 1],
        w.omega_v[k - 1 : l],
    )
    sub_mask = _resolve_mask(g, mask)[k - 1 : l]
    return sub_g, sub_w, sub_mask


def restricted_polynomial(
    g: CylinderGraph, w: WeightAssignment, k: int, l: int, mask=None
) -> MonomerPolynomial:
    sub_g, sub_w, sub_mask = restrict(g, w, k, l, mask)
    return partition_polynomial(sub_g, sub_w, sub_mask)


def kill_vertex_edges(w: WeightAssignment, vertices) -> WeightAssignment:
    """Disable every edge incident to the given vertices (-inf sentinels).

    The killed vertices are then forced monomers, so dividing out their
    monomer weight realizes vertex removal without rebuilding the graph.
    """
    g = w.g
    oh = np.array(w.omega_h, copy=True)
    ov = np.array(w.omega_v, copy=True)
    for v in vertices:
        i, j = v
        g.flat_index(v)
        if i > 1:
            oh[i - 2, j - 1] = NEG_INF
        if i < g.n:
            oh[i - 1, j - 1] = NEG_INF
        for e, (a, b) in enumerate(g.H.edges):
            if j in (a, b):
                ov[i - 1, e] = NEG_INF
    return WeightAssignment(g, w.nu, oh, ov)


def vertex_removed_polynomial(
    g: CylinderGraph, w: WeightAssignment, v: tuple[int, int], mask=None
) -> MonomerPolynomial:
    """Monomer polynomial of the graph with one vertex deleted.

    Computed on the full graph with the incident edges disabled, which
    forces v to stay a monomer in every configuration; stripping its
    monomer factor (and coefficient shift, when counted) yields the
    polynomial of the deleted-vertex graph.
    """
    mask_arr = _resolve_mask(g, mask)
    killed = partition_polynomial(g, kill_vertex_edges(w, [v]), mask_arr)
    i, j = v
    lc = killed.log_coeffs - w.nu[i - 1, j - 1]
    if mask_arr[i - 1, j - 1]:
        lc = lc[1:]
    return MonomerPolynomial(lc, N=g.num_vertices - 1, mask_size=lc.size - 1)


def remainder_R(g: CylinderGraph, w: WeightAssignment, k: int, x: float = 0.0) -> float:
    """Superadditivity gap log Z - log Z_[1:k] - log Z_[k+1:n] at tilt x."""
    if not (1 <= k < g.n):
        raise ValueError(f"cut k={k} must satisfy 1 <= k < n={g.n}")
    full = scalar_log_z(g, w, x)
    left = scalar_log_z(*restrict(g, w, 1, k)[:2], x)
    right = scalar_log_z(*restrict(g, w, k + 1, g.n)[:2], x)
    return full - left - right


def remainder_upper_bound(g: CylinderGraph, w: WeightAssignment, k: int) -> float:
    """Sum of 1 + |gauge weight| over the cut edges (disabled edges add 0)."""
    z = w.gauge_h[k - 1]
    finite = np.isfinite(z)
    return float(np.sum(1.0 + np.abs(z[finite])))


def section_covariance(g: CylinderGraph, w: WeightAssignment, k: int) -> float:
    """Cov of the monomer counts of layers [1:k] and [k+1:n] by polarization."""
    if not (1 <= k < g.n):
        raise ValueError(f"cut k={k} must satisfy 1 <= k < n={g.n}")
    var_all = partition_polynomial(g, w).cumulants(0.0, 2)[1]
    var_l = partition_polynomial(g, w, CountingMask.layer_range(1, k)).cumulants(0.0, 2)[1]
    var_r = partition_polynomial(g, w, CountingMask.layer_range(k + 1, g.n)).cumulants(0.0, 2)[1]
    return 0.5 * (var_all - var_l - var_r)


# ---------------------------------------------------------------------------
# dyadic subdivision report
# ---------------------------------------------------------------------------

@dataclass
class DyadicNode:
    lo: int
    hi: int
    cut: int | None = None
    R: float | None = None
    dRdx: float | None = None
    T: float | None = None
    bound: float | None = None
    children: list = field(default_factory=list)

    def walk(self):
        yield self
        for c in self.children:
            yield from c.walk()


@dataclass
class DyadicReport:
    root: DyadicNode
    max_abs_R: float
    max_abs_dRdx: float

    def nodes(self) -> list[DyadicNode]:
        return list(self.root.walk())


def dyadic_report(
    g: CylinderGraph, w: WeightAssignment, depth: int, x: float = 0.0, fd_step: float = 1e-3
) -> DyadicReport:
    """Recursive halving of the cylinder, reporting the cut and drop errors.

    Odd blocks first drop their terminal layer (error T), then every block
    is cut in the middle (error R); recursion proceeds ``depth`` levels or
    until single layers.  R is also differentiated in the tilt by a central
    finite difference.
    """

    def block_log_z(lo, hi, xx):
        sub_g, sub_w, _ = restrict(g, w, lo, hi)
        return scalar_log_z(sub_g, sub_w, xx)

    def build(lo, hi, level) -> DyadicNode:
        node = DyadicNode(lo=lo, hi=hi)
        length = hi - lo + 1
        if level <= 0 or length < 2:
            return node
        eff_hi = hi
        if length % 2 == 1:
            node.T = block_log_z(lo, hi, x) - block_log_z(lo, hi - 1, x)
            eff_hi = hi - 1
            length -= 1
        cut = lo + length // 2 - 1
        node.cut = cut
        rs = []
        for xx in (x - fd_step, x, x + fd_step):
            rs.append(
                block_log_z(lo, eff_hi, xx)
                - block_log_z(lo, cut, xx)
                - block_log_z(cut + 1, eff_hi, xx)
            )
        node.R = rs[1]
        node.dRdx = (rs[2] - rs[0]) / (2.0 * fd_step)
        node.bound = remainder_upper_bound(g, w, cut)
        node.children = [build(lo, cut, level - 1), build(cut + 1, eff_hi, level - 1)]
        return node

    root = build(1, g.n, depth)
    rvals = [abs(nd.R) for nd in root.walk() if nd.R is not None]
    dvals = [abs(nd.dRdx) for nd in root.walk() if nd.dRdx is not None]
    return DyadicReport(
        root=root,
        max_abs_R=max(rvals, default=0.0),
        max_abs_dRdx=max(dvals, default=0.0),
    )
