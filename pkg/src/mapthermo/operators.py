"""Dense linear algebra for small Hilbert spaces.

Hermitian operators, density matrices, spectral calculus, and superoperators
in the vectorized (Liouville) representation. Everything is plain numpy on
d x d and d^2 x d^2 complex arrays; dimensions stay small (d <= ~64) so no
sparsity or structure exploitation is attempted.

Vectorization convention (fixed globally, never changed)
--------------------------------------------------------
Operators are vectorized by column stacking: vec(A)[i + d*j] = A[i, j], i.e.
``A.reshape(-1, order="F")``. Consequences used throughout:

* vec(A X B) = (B^T kron A) vec(X)
* a Kraus map X -> sum_k M_k X M_k^dagger has matrix sum_k conj(M_k) kron M_k
* the Hilbert-Schmidt inner product Tr{A^dagger B} equals vec(A)^dagger vec(B),
  so the HS adjoint of a superoperator is the conjugate transpose of its
  matrix.

The Choi matrix convention is fixed by `choi_matrix` below: C = (1/d) *
reshuffle(S), normalized so that a trace-preserving map has Tr{C} = 1 and the
identity map gives a rank-one C with eigenvalues {1, 0, ..., 0} (so its
minimum Choi eigenvalue is 0, not 1/d).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .errors import ConstructionError, SingularMap

HERMITICITY_TOL = 1e-12
TRACE_TOL = 1e-12
POSITIVITY_TOL = 1e-10
HP_CHECK_TOL = 1e-10
COND_THRESHOLD_DEFAULT = 1e12


def _as_square_complex(entries) -> np.ndarray:
    a = np.asarray(entries, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ConstructionError(f"expected a square matrix, got shape {a.shape}")
    return a


@dataclass(frozen=True, eq=False)
class HermitianOperator:
    """A d x d complex Hermitian matrix.

    Inputs within 1e-12 of Hermitian (scaled by the matrix norm) are
    symmetrized on construction; anything worse is rejected. Quadrature and
    repeated map application accumulate tiny anti-Hermitian noise, which the
    symmetrization absorbs without hiding genuine errors.
    """

    matrix: np.ndarray

    def __post_init__(self):
        a = _as_square_complex(self.matrix)
        scale = max(1.0, float(np.max(np.abs(a))))
        dev = float(np.max(np.abs(a - a.conj().T)))
        if dev > HERMITICITY_TOL * scale:
            raise ConstructionError(
                f"matrix is not Hermitian: max |A - A^dagger| = {dev:.3e} "
                f"(allowed {HERMITICITY_TOL * scale:.3e})")
        sym = 0.5 * (a + a.conj().T)
        sym.setflags(write=False)
        object.__setattr__(self, "matrix", sym)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __add__(self, other: "HermitianOperator") -> "HermitianOperator":
        return HermitianOperator(self.matrix + other.matrix)

    def __sub__(self, other: "HermitianOperator") -> "HermitianOperator":
        return HermitianOperator(self.matrix - other.matrix)

    def __rmul__(self, scalar: float) -> "HermitianOperator":
        return HermitianOperator(float(scalar) * self.matrix)

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def norm(self) -> float:
        """Frobenius norm."""
        return float(np.linalg.norm(self.matrix))

    def expectation(self, rho: "DensityMatrix") -> float:
        return float(np.trace(self.matrix @ rho.matrix).real)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """A valid quantum state: Hermitian, unit trace, positive semidefinite
    (minimum eigenvalue >= -1e-10 to tolerate roundoff)."""

    matrix: np.ndarray

    def __post_init__(self):
        a = _as_square_complex(self.matrix)
        dev = float(np.max(np.abs(a - a.conj().T)))
        if dev > HERMITICITY_TOL * max(1.0, float(np.max(np.abs(a)))):
            raise ConstructionError(f"state is not Hermitian (dev {dev:.3e})")
        a = 0.5 * (a + a.conj().T)
        tr = complex(np.trace(a))
        if abs(tr - 1.0) > TRACE_TOL:
            raise ConstructionError(f"state trace is {tr}, expected 1")
        lo = float(np.linalg.eigvalsh(a)[0])
        if lo < -POSITIVITY_TOL:
            raise ConstructionError(
                f"state has negative eigenvalue {lo:.3e} below -{POSITIVITY_TOL}")
        a.setflags(write=False)
        object.__setattr__(self, "matrix", a)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def vec(a: np.ndarray) -> np.ndarray:
    """Column-stack a matrix into a vector."""
    return np.asarray(a, dtype=complex).reshape(-1, order="F")


def unvec(v: np.ndarray, dim: int | None = None) -> np.ndarray:
    """Inverse of `vec`."""
    v = np.asarray(v, dtype=complex).reshape(-1)
    if dim is None:
        dim = int(round(np.sqrt(v.size)))
    if dim * dim != v.size:
        raise ValueError(f"vector of length {v.size} is not a vectorized square matrix")
    return v.reshape((dim, dim), order="F")


@dataclass(frozen=True, eq=False)
class Superoperator:
    """A linear map on operators, stored as its d^2 x d^2 matrix in the
    column-stacking convention.

    Construction checks Hermiticity preservation (the reshuffled Choi matrix
    must be Hermitian to 1e-10 relative); physical maps, generators,
    dissipators, adjoints, inverses and their compositions all satisfy this.
    The `trace_preserving` flag is advisory: when set, Tr{S[A]} = Tr{A} is
    verified on construction to 1e-10.
    """

    matrix: np.ndarray
    trace_preserving: bool = False

    def __post_init__(self):
        m = _as_square_complex(self.matrix)
        d2 = m.shape[0]
        d = int(round(np.sqrt(d2)))
        if d * d != d2:
            raise ConstructionError(f"superoperator side {d2} is not a perfect square")
        scale = max(1.0, float(np.max(np.abs(m))))
        r = _reshuffle(m, d)
        herm_dev = float(np.max(np.abs(r - r.conj().T)))
        if herm_dev > HP_CHECK_TOL * scale:
            raise ConstructionError(
                f"superoperator is not Hermiticity-preserving: Choi deviation "
                f"{herm_dev:.3e} (allowed {HP_CHECK_TOL * scale:.3e})")
        if self.trace_preserving:
            tp_dev = _tp_residual(m, d)
            if tp_dev > HP_CHECK_TOL * scale:
                raise ConstructionError(
                    f"flagged trace-preserving but residual is {tp_dev:.3e}")
        # Project onto the Hermiticity-preserving subspace (symmetrize the
        # Choi rearrangement), mirroring the Hermitian repair on operators.
        m = _reshuffle(0.5 * (r + r.conj().T), d)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        """Hilbert-space dimension d (matrix side is d^2)."""
        return int(round(np.sqrt(self.matrix.shape[0])))


def _reshuffle(m: np.ndarray, d: int) -> np.ndarray:
    """Row-reshuffle of a d^2 x d^2 matrix (unnormalized Choi rearrangement
    for the column-stacking convention)."""
    return m.reshape(d, d, d, d).transpose(3, 1, 2, 0).reshape(d * d, d * d)


def _tp_residual(m: np.ndarray, d: int) -> float:
    ident = vec(np.eye(d))
    return float(np.max(np.abs(m.conj().T @ ident - ident)))


def identity_superop(dim: int) -> Superoperator:
    return Superoperator(np.eye(dim * dim, dtype=complex), trace_preserving=True)


def superop_from_action(action: Callable[[np.ndarray], np.ndarray], dim: int,
                        trace_preserving: bool = False) -> Superoperator:
    """Build the matrix of a linear operator map column by column from its
    action on the matrix units E_ij."""
    m = np.zeros((dim * dim, dim * dim), dtype=complex)
    for j in range(dim):
        for i in range(dim):
            unit = np.zeros((dim, dim), dtype=complex)
            unit[i, j] = 1.0
            m[:, i + dim * j] = vec(action(unit))
    return Superoperator(m, trace_preserving=trace_preserving)


def kraus_superop(kraus_ops: Iterable[np.ndarray],
                  trace_preserving: bool = True) -> Superoperator:
    """Superoperator of X -> sum_k M_k X M_k^dagger."""
    ops = [np.asarray(k, dtype=complex) for k in kraus_ops]
    d = ops[0].shape[0]
    m = np.zeros((d * d, d * d), dtype=complex)
    for k in ops:
        m += np.kron(k.conj(), k)
    return Superoperator(m, trace_preserving=trace_preserving)


def conjugation_superop(u: np.ndarray) -> Superoperator:
    """Superoperator of X -> U X U^dagger for a unitary U."""
    return kraus_superop([u])


def commutator_superop(h: np.ndarray) -> np.ndarray:
    """Matrix of X -> [H, X] in the vectorized convention (raw ndarray)."""
    h = np.asarray(h, dtype=complex)
    d = h.shape[0]
    return np.kron(np.eye(d), h) - np.kron(h.T, np.eye(d))


def apply(s: Superoperator, a: np.ndarray | HermitianOperator) -> np.ndarray:
    """Apply a superoperator to an operator, returning a raw ndarray."""
    mat = a.matrix if isinstance(a, HermitianOperator) else np.asarray(a, dtype=complex)
    if mat.shape != (s.dim, s.dim):
        raise ValueError(f"operator shape {mat.shape} does not match dim {s.dim}")
    return unvec(s.matrix @ vec(mat), s.dim)


def apply_hermitian(s: Superoperator, a: HermitianOperator) -> HermitianOperator:
    """Apply and re-wrap; raises if the result drifted off Hermitian."""
    return HermitianOperator(apply(s, a))


def hs_adjoint(s: Superoperator) -> Superoperator:
    """Adjoint with respect to the Hilbert-Schmidt inner product.

    With column stacking this is just the conjugate transpose of the matrix.
    The trace_preserving flag does not survive (the adjoint of a TP map is
    unital, not TP, in general).
    """
    return Superoperator(s.matrix.conj().T)


def compose(s1: Superoperator, s2: Superoperator) -> Superoperator:
    """Composition s1 after s2 (matrix product)."""
    return Superoperator(s1.matrix @ s2.matrix,
                         trace_preserving=s1.trace_preserving and s2.trace_preserving)


def condition_number(s: Superoperator) -> float:
    return float(np.linalg.cond(s.matrix, 2))


def invert(s: Superoperator, cond_threshold: float = COND_THRESHOLD_DEFAULT,
           time: float | None = None) -> tuple[Superoperator, float]:
    """Invert a superoperator, reporting its 2-norm condition number.

    Raises SingularMap (carrying `time` when given) if the condition number
    exceeds the threshold. The trace_preserving flag is not propagated: the
    inverse of a TP map is TP in exact arithmetic, but at high condition
    number the numerical residual can exceed the flag's guarantee.
    """
    cond = condition_number(s)
    if not np.isfinite(cond) or cond > cond_threshold:
        label = "" if time is None else f" at t = {time:.6g}"
        raise SingularMap(
            f"map{label} is numerically singular: cond = {cond:.3e} "
            f"exceeds threshold {cond_threshold:.3e}",
            time=time, condition_number=cond)
    inv = np.linalg.inv(s.matrix)
    return Superoperator(inv), cond


def eig_hermitian(h: HermitianOperator) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and orthonormal eigenvector columns."""
    vals, vecs = np.linalg.eigh(h.matrix)
    return vals, vecs


def func_hermitian(h: HermitianOperator, f: Callable[[np.ndarray], np.ndarray],
                   ) -> HermitianOperator:
    """Spectral calculus: apply a real function to the eigenvalues.

    `f` must accept an ndarray of eigenvalues and return real values; a nan
    or inf in the output is treated as a domain error.
    """
    vals, vecs = eig_hermitian(h)
    fvals = np.asarray(f(vals), dtype=float)
    if fvals.shape != vals.shape:
        raise ValueError("function must map eigenvalues elementwise")
    if not np.all(np.isfinite(fvals)):
        bad = vals[~np.isfinite(fvals)]
        raise ValueError(f"function undefined on eigenvalues {bad}")
    return HermitianOperator((vecs * fvals) @ vecs.conj().T)


def exp_hermitian(h: HermitianOperator, scale: float = 1.0) -> HermitianOperator:
    """e^{scale * H} by spectral calculus."""
    return func_hermitian(h, lambda x: np.exp(scale * x))


def log_hermitian_zero_convention(h: HermitianOperator,
                                  zero_tol: float = 1e-14) -> HermitianOperator:
    """Matrix logarithm with ln(0) := 0 on the null space.

    Eigenvalues within `zero_tol` of zero contribute nothing; genuinely
    negative eigenvalues are a domain error.
    """
    vals, vecs = eig_hermitian(h)
    if np.any(vals < -zero_tol):
        raise ValueError(f"logarithm undefined: negative eigenvalue {vals[0]:.3e}")
    out = np.zeros_like(vals)
    mask = vals > zero_tol
    out[mask] = np.log(vals[mask])
    return HermitianOperator((vecs * out) @ vecs.conj().T)


def gibbs_state(h: HermitianOperator, beta: float) -> DensityMatrix:
    """e^{-beta H} / Tr{e^{-beta H}}, computed with the spectrum shifted so
    the largest Boltzmann weight is 1 (no overflow for large beta)."""
    vals, vecs = eig_hermitian(h)
    w = np.exp(-beta * (vals - vals.min()))
    w /= w.sum()
    return DensityMatrix((vecs * w) @ vecs.conj().T)


def partition_function(h: HermitianOperator, beta: float) -> float:
    vals, _ = eig_hermitian(h)
    return float(np.sum(np.exp(-beta * vals)))


def choi_matrix(s: Superoperator) -> np.ndarray:
    """Choi matrix, normalized to unit trace for TP maps: C = reshuffle(S)/d."""
    return _reshuffle(s.matrix, s.dim) / s.dim


@dataclass(frozen=True)
class CPTPReport:
    trace_preserving_residual: float
    choi_min_eigenvalue: float
    unital_residual: float
    hermiticity_residual: float = field(default=0.0)


def cptp_diagnostics(s: Superoperator) -> CPTPReport:
    """Diagnostics only, never raises: TP residual, minimum Choi eigenvalue
    (negative values are legal for generator-level intermediate maps and are
    reported, not rejected), unitality residual, and the Choi Hermiticity
    residual."""
    d = s.dim
    ident = vec(np.eye(d))
    tp = float(np.max(np.abs(s.matrix.conj().T @ ident - ident)))
    unital = float(np.max(np.abs(s.matrix @ ident - ident)))
    c = choi_matrix(s)
    herm = float(np.max(np.abs(c - c.conj().T)))
    cmin = float(np.linalg.eigvalsh(0.5 * (c + c.conj().T))[0])
    return CPTPReport(trace_preserving_residual=tp, choi_min_eigenvalue=cmin,
                      unital_residual=unital, hermiticity_residual=herm)


# Pauli matrices and the qubit transfer-matrix basis change. PAULI order is
# (identity, sigma_x, sigma_y, sigma_z); transfer matrices R act on Bloch
# coefficient vectors via R_ij = Tr{P_i S[P_j]} / 2.

PAULI = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def pauli_transfer_matrix(s: Superoperator) -> np.ndarray:
    """4x4 real transfer matrix of a qubit superoperator in the PAULI basis."""
    if s.dim != 2:
        raise ValueError("Pauli transfer matrix requires dim 2")
    r = np.empty((4, 4), dtype=float)
    for j, pj in enumerate(PAULI):
        image = apply(s, pj)
        for i, pi in enumerate(PAULI):
            val = 0.5 * np.trace(pi @ image)
            r[i, j] = val.real
    return r


def superop_from_pauli_transfer(r: np.ndarray,
                                trace_preserving: bool = False) -> Superoperator:
    """Inverse of `pauli_transfer_matrix`: S = (1/2) sum_ij R_ij vec(P_i) vec(P_j)^dagger."""
    r = np.asarray(r, dtype=float)
    if r.shape != (4, 4):
        raise ValueError("transfer matrix must be 4x4")
    m = np.zeros((4, 4), dtype=complex)
    for i, pi in enumerate(PAULI):
        vi = vec(pi)
        for j, pj in enumerate(PAULI):
            if r[i, j] != 0.0:
                m += 0.5 * r[i, j] * np.outer(vi, vec(pj).conj())
    return Superoperator(m, trace_preserving=trace_preserving)


def random_hermitian(dim: int, rng: np.random.Generator,
                     scale: float = 1.0) -> HermitianOperator:
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return HermitianOperator(scale * 0.5 * (a + a.conj().T))


def random_density_matrix(dim: int, rng: np.random.Generator) -> DensityMatrix:
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = a @ a.conj().T
    return DensityMatrix(rho / np.trace(rho))


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(a)
    return q * (np.diagonal(r) / np.abs(np.diagonal(r)))
