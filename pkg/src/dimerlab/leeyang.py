"""Zero structure of monic monomer-count polynomials.

For gauge-transformed weights (all vertex weights zero) the partition
function in the variable w = exp(x) is a monic degree-N polynomial with
nonnegative coefficients and fixed parity, and it factors as

    Z(w) = w^z0 * prod_i (w^2 + lambda_i^2),

i.e. all zeroes lie on the imaginary axis at +-i lambda.  This module
extracts the positive half-spectrum {lambda_i} together with the
multiplicity of the zero at the origin, and evaluates the spectral-measure
functionals (mean monomer density, quenched variance density, Stieltjes
style transform) as finite sums over the signed atom multiset.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal  # noqa: F401  (re-export convenience)

from .graphs import CylinderGraph, WeightAssignment, weighted_degree
from .transfer import NEG_INF, MonomerPolynomial


class SpectrumError(ArithmeticError):
    """The polynomial does not have the expected imaginary zero structure."""


class NonImaginaryZeroError(SpectrumError):
    pass


class ReconstructionError(SpectrumError):
    pass


@dataclass(frozen=True)
class LeeYangSpectrum:
    """Positive half-spectrum, zero multiplicity, and polynomial degree."""

    lambdas: tuple[float, ...]
    zero_mult: int
    N: int

    def __post_init__(self):
        if 2 * len(self.lambdas) + self.zero_mult != self.N:
            raise ValueError(
                f"2*{len(self.lambdas)} + {self.zero_mult} != N={self.N}"
            )

    def signed_atoms(self) -> np.ndarray:
        """All N zero locations -lambda, 0, +lambda in ascending order."""
        lam = np.asarray(self.lambdas)
        return np.concatenate([-lam[::-1], np.zeros(self.zero_mult), lam])

    def max_abs(self) -> float:
        return max(self.lambdas) if self.lambdas else 0.0


def _even_part_log_coeffs(p: MonomerPolynomial) -> tuple[np.ndarray, int]:
    """Log coefficients c_r of P(s) with Z(w) = w^(N mod 2) P(w^2)."""
    if p.mask_size != p.N:
        raise ValueError("spectrum needs a fully counted polynomial (mask = all)")
    if abs(p.log_coeffs[-1]) > 1e-9:
        raise ValueError(
            "polynomial is not monic; compute it from gauge-transformed weights"
        )
    parity = p.N % 2
    lc = p.log_coeffs
    bad = [j for j in range(p.N + 1) if j % 2 != parity and lc[j] != NEG_INF]
    if bad:
        raise ValueError(f"coefficient parity violated at indices {bad}")
    return lc[parity::2], parity


def spectrum(
    p: MonomerPolynomial,
    imag_tol: float = 1e-7,
    recon_tol: float = 1e-8,
) -> LeeYangSpectrum:
    """Extract the imaginary-axis zeroes of a monic monomer polynomial.

    The substitution s = w^2 halves the degree; the s-roots are found from
    the (balanced) companion matrix after rescaling the coefficients into
    unit range, and each s-root must sit on the negative real axis within
    ``imag_tol``.  The factored form is expanded again in log space and has
    to reproduce every coefficient to ``recon_tol`` relative error.
    """
    c, parity = _even_part_log_coeffs(p)
    zero_mult = parity
    # exact zero roots in s: strip vanishing low-order coefficients
    start = 0
    while start < c.size - 1 and c[start] == NEG_INF:
        start += 1
    zero_mult += 2 * start
    c = c[start:]
    q = c.size - 1
    lambdas: list[float] = []
    if q > 0:
        # rescale s -> (e^t)^2 s so the largest coefficient is about 1
        finite = np.isfinite(c[:-1])
        t = 0.0
        if finite.any():
            r = np.arange(q)[finite]
            t = max(0.0, float(np.max(c[:-1][finite] / (2.0 * (q - r)))))
        coeff = np.exp(c - 2.0 * t * (q - np.arange(q + 1)))
        roots = np.roots(coeff[::-1])  # descending powers
        wroots = np.sqrt(-roots)       # candidate lambdas (scaled)
        dev = np.abs(wroots.imag)
        bad = dev > imag_tol * (1.0 + np.abs(wroots))
        if bad.any():
            worst = roots[np.argmax(dev)] * np.exp(2.0 * t)
            raise NonImaginaryZeroError(f"zero off the imaginary axis: s-root {worst}")
        lambdas = sorted(float(v) for v in np.abs(wroots) * np.exp(t))
    spec = LeeYangSpectrum(tuple(lambdas), zero_mult, p.N)
    _check_reconstruction(p, spec, recon_tol)
    return spec


def _check_reconstruction(p: MonomerPolynomial, spec: LeeYangSpectrum, tol: float) -> None:
    c_ref, parity = _even_part_log_coeffs(p)
    q = c_ref.size - 1
    shift = (spec.zero_mult - parity) // 2
    # expand prod (s + lambda^2) in log space; all terms nonnegative
    acc = np.full(q + 1, NEG_INF)
    acc[shift] = 0.0
    for lam in spec.lambdas:
        ll = 2.0 * np.log(lam) if lam > 0 else NEG_INF
        nxt = np.full_like(acc, NEG_INF)
        nxt[1:] = acc[:-1]
        acc = np.logaddexp(nxt, acc + ll)
    finite = np.isfinite(c_ref)
    if not np.array_equal(finite, np.isfinite(acc)):
        raise ReconstructionError("support mismatch between roots and coefficients")
    rel = np.abs(np.expm1(acc[finite] - c_ref[finite]))
    if rel.size and rel.max() > tol:
        raise ReconstructionError(
            f"root product misses coefficients (relative error {rel.max():.3e})"
        )


def verify_interlacing(
    parent: LeeYangSpectrum, child: LeeYangSpectrum, slack: float = 1e-9
) -> bool:
    """Do the child's signed zeroes separate the parent's?

    ``child`` must come from the parent graph with one vertex removed;
    writing the ascending signed sequences p (length N) and c (length N-1),
    interlacing means p_k <= c_k <= p_{k+1} for every k.
    """
    if child.N != parent.N - 1:
        raise ValueError(
            f"child degree {child.N} is not parent degree {parent.N} minus one"
        )
    pa = parent.signed_atoms()
    ca = child.signed_atoms()
    return bool(
        np.all(pa[:-1] - slack <= ca) and np.all(ca <= pa[1:] + slack)
    )


def localization_bound(g: CylinderGraph, w: WeightAssignment) -> float:
    """Max over vertices of the gauge-weighted degree; bounds every zero."""
    return max(weighted_degree(g, w, v) for v in g.vertices())


def localization_check(
    g: CylinderGraph, w: WeightAssignment, spec: LeeYangSpectrum, slack: float = 1e-9
) -> tuple[float, bool]:
    bound = localization_bound(g, w)
    return bound, spec.max_abs() <= bound + slack


# ---------------------------------------------------------------------------
# spectral measure functionals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EmpiricalMeasure:
    """Zero atoms with both normalizations: per layer (mass h) and per atom."""

    atoms: tuple[float, ...]
    n_layers: int

    @classmethod
    def from_spectrum(cls, spec: LeeYangSpectrum, n_layers: int) -> "EmpiricalMeasure":
        return cls(tuple(spec.signed_atoms()), n_layers)

    def mass(self) -> float:
        return len(self.atoms) / self.n_layers


def _squared_tilted(atoms: np.ndarray, x: float) -> np.ndarray:
    """lambda^2 exp(-2x) per atom, computed in log space to dodge overflow."""
    out = np.zeros_like(atoms)
    nz = atoms != 0.0
    with np.errstate(over="ignore"):
        out[nz] = np.exp(2.0 * np.log(np.abs(atoms[nz])) - 2.0 * x)
    return out


def density_functionals(
    spec: LeeYangSpectrum, x: float, n_layers: int
) -> tuple[float, float]:
    """Mean and quenched-variance densities of the monomer count at tilt x.

    Both are finite sums over the signed atom multiset divided by the layer
    count: u_n = (1/n) sum 1/(1 + lambda^2 e^{-2x}) and varQ_n = (1/n) sum
    2 lambda^2 e^{-2x} / (1 + lambda^2 e^{-2x})^2.  They match the exact
    coefficient cumulants divided by n.
    """
    atoms = np.asarray(spec.signed_atoms())
    t = _squared_tilted(atoms, x)
    with np.errstate(invalid="ignore"):
        f1 = np.where(np.isinf(t), 0.0, 1.0 / (1.0 + t))
        var_terms = np.where(np.isinf(t), 0.0, 2.0 * t / (1.0 + t) ** 2)
    return float(f1.sum() / n_layers), float(var_terms.sum() / n_layers)


def transform_F(spec: LeeYangSpectrum, z: complex) -> complex:
    """Probability-normalized transform F(z) = (1/N) sum z / (z + lambda^2).

    Defined for z > 0 (off the real axis also works); at z = e^{2x} it
    equals the mean unpaired-vertex density times n/N.
    """
    if complex(z).imag == 0.0 and complex(z).real <= 0.0:
        raise ValueError(f"transform needs z > 0, got {z}")
    atoms = np.asarray(spec.signed_atoms())
    val = np.mean(z / (z + atoms**2))
    if isinstance(z, complex):
        return complex(val)
    return float(val.real) if np.isrealobj(val) or abs(val.imag) < 1e-15 else complex(val)
