"""Finite-dimensional Hilbert spaces, states and dense linear-algebra primitives.

Conventions used throughout the package:

* factor 0 of a tensor product is the slowest-varying index (``np.kron``
  ordering), so a composite basis state ``|a, b>`` has flat index
  ``a * dim_b + b``;
* ``herm_exp(h, t)`` returns ``exp(-i h t)``;
* fidelity follows the squared convention, ``F(|psi>, |phi>) = |<psi|phi>|^2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "HilbertFactorization",
    "StateVector",
    "DensityOperator",
    "SchmidtData",
    "tensor_product",
    "tensor_many",
    "ptrace",
    "partial_trace",
    "herm_exp",
    "polar_decompose",
    "schmidt",
    "schmidt_split",
    "fidelity",
    "trace_distance",
]

#: default absolute tolerance for structural checks (orthogonality, unitarity)
ATOL = 1e-10


@dataclass(frozen=True)
class HilbertFactorization:
    """An ordered tensor factorization of a finite Hilbert space.

    ``factors[0]`` is the slowest-varying (leftmost) tensor slot.
    """

    factors: tuple[int, ...]

    def __init__(self, factors):
        factors = tuple(int(d) for d in factors)
        if not factors:
            raise ValueError("factorization needs at least one factor")
        if any(d < 1 for d in factors):
            raise ValueError(f"factor dimensions must be positive, got {factors}")
        object.__setattr__(self, "factors", factors)

    @property
    def total(self) -> int:
        dim = 1
        for d in self.factors:
            dim *= d
        return dim

    def __len__(self) -> int:
        return len(self.factors)

    def subspace(self, indices) -> "HilbertFactorization":
        """Factorization of the listed factors, kept in their given order."""
        return HilbertFactorization(tuple(self.factors[i] for i in indices))


def _as_space(space) -> HilbertFactorization:
    if isinstance(space, HilbertFactorization):
        return space
    return HilbertFactorization(tuple(space))


@dataclass(frozen=True, eq=False)
class StateVector:
    """A normalized pure state over a factorized Hilbert space."""

    amplitudes: np.ndarray
    space: HilbertFactorization

    def __init__(self, amplitudes, space, *, atol=1e-10):
        space = _as_space(space)
        amplitudes = np.asarray(amplitudes, dtype=complex).reshape(-1)
        if amplitudes.size != space.total:
            raise ValueError(
                f"amplitude length {amplitudes.size} does not match "
                f"space dimension {space.total}"
            )
        nrm = float(np.linalg.norm(amplitudes))
        if abs(nrm - 1.0) > atol:
            raise ValueError(f"state vector is not normalized: |norm - 1| = {abs(nrm - 1.0):.3e}")
        object.__setattr__(self, "amplitudes", amplitudes)
        object.__setattr__(self, "space", space)

    @classmethod
    def basis(cls, space, index: int) -> "StateVector":
        space = _as_space(space)
        amp = np.zeros(space.total, dtype=complex)
        amp[index] = 1.0
        return cls(amp, space)

    @classmethod
    def from_unnormalized(cls, amplitudes, space) -> "StateVector":
        amplitudes = np.asarray(amplitudes, dtype=complex).reshape(-1)
        nrm = np.linalg.norm(amplitudes)
        if nrm == 0:
            raise ValueError("cannot normalize the zero vector")
        return cls(amplitudes / nrm, space)

    def to_density(self) -> "DensityOperator":
        amp = self.amplitudes
        return DensityOperator(np.outer(amp, amp.conj()), self.space)


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """A density matrix over a factorized Hilbert space.

    Hermiticity and unit trace are validated at construction; positivity is
    checked lazily through :meth:`validate_psd` because it needs a full
    eigendecomposition.
    """

    matrix: np.ndarray
    space: HilbertFactorization

    def __init__(self, matrix, space, *, atol=1e-10):
        space = _as_space(space)
        matrix = np.asarray(matrix, dtype=complex)
        d = space.total
        if matrix.shape != (d, d):
            raise ValueError(f"matrix shape {matrix.shape} does not match space dimension {d}")
        herm = np.abs(matrix - matrix.conj().T).max()
        if herm > atol:
            raise ValueError(f"density matrix is not Hermitian: asymmetry {herm:.3e}")
        tr = matrix.trace()
        if abs(tr - 1.0) > atol:
            raise ValueError(f"density matrix trace {tr} is not 1")
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "space", space)

    def validate_psd(self, atol=1e-10) -> None:
        """Raise if any eigenvalue is below ``-atol``."""
        lo = float(np.linalg.eigvalsh(self.matrix).min())
        if lo < -atol:
            raise ValueError(f"density matrix has negative eigenvalue {lo:.3e}")

    def eigenvalues(self, *, clamp=True) -> np.ndarray:
        """Spectrum in ascending order; small negatives clamped to 0."""
        vals = np.linalg.eigvalsh(self.matrix)
        if clamp:
            if vals.min() < -1e-10:
                raise ValueError(f"eigenvalue {vals.min():.3e} below clamping tolerance")
            vals = np.clip(vals, 0.0, None)
        return vals

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))


@dataclass(frozen=True, eq=False)
class SchmidtData:
    """Schmidt decomposition of a pure state across a bipartition.

    ``coefficients`` are nonincreasing and their squares sum to one.  Column
    ``i`` of ``left_vectors`` / ``right_vectors`` is the i-th Schmidt pair.
    ``left_factors`` records which factors of the original space form the
    left side (in their original relative order).
    """

    coefficients: np.ndarray
    left_vectors: np.ndarray
    right_vectors: np.ndarray
    left_factors: tuple[int, ...]
    right_factors: tuple[int, ...]
    left_space: HilbertFactorization
    right_space: HilbertFactorization

    def reconstruct(self) -> StateVector:
        """Rebuild the state in the original factor order."""
        dims_left = self.left_space.factors
        dims_right = self.right_space.factors
        mat = (self.left_vectors * self.coefficients) @ self.right_vectors.T
        perm = list(self.left_factors) + list(self.right_factors)
        inv = np.argsort(perm)
        tens = mat.reshape(dims_left + dims_right).transpose(inv)
        full = HilbertFactorization(tuple(np.array(dims_left + dims_right)[inv]))
        return StateVector(tens.reshape(-1), full)


def tensor_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product with factor 0 slowest (plain ``np.kron``)."""
    return np.kron(np.asarray(a), np.asarray(b))


def tensor_many(*ops: np.ndarray) -> np.ndarray:
    """Left-to-right Kronecker product of any number of arrays."""
    if not ops:
        raise ValueError("tensor_many needs at least one operand")
    out = np.asarray(ops[0])
    for op in ops[1:]:
        out = np.kron(out, np.asarray(op))
    return out


def ptrace(mat: np.ndarray, dims, keep) -> np.ndarray:
    """Partial trace at array level.

    Parameters
    ----------
    mat : square matrix over the product of ``dims``.
    dims : per-factor dimensions, factor 0 slowest.
    keep : indices (in ``dims``) of the factors to retain, preserving
        their original relative order.
    """
    dims = tuple(int(d) for d in dims)
    keep = sorted(set(int(i) for i in keep))
    if any(i < 0 or i >= len(dims) for i in keep):
        raise ValueError(f"keep indices {keep} out of range for {len(dims)} factors")
    mat = np.asarray(mat)
    d = int(np.prod(dims))
    if mat.shape != (d, d):
        raise ValueError(f"matrix shape {mat.shape} does not match dims {dims}")
    k = len(dims)
    tens = mat.reshape(dims + dims)
    row_ids = []
    col_ids = []
    out_rows = []
    out_cols = []
    nxt = 0
    for i in range(k):
        if i in keep:
            row_ids.append(nxt)
            col_ids.append(nxt + 1)
            out_rows.append(nxt)
            out_cols.append(nxt + 1)
            nxt += 2
        else:
            row_ids.append(nxt)
            col_ids.append(nxt)
            nxt += 1
    reduced = np.einsum(tens, row_ids + col_ids, out_rows + out_cols)
    dk = int(np.prod([dims[i] for i in keep])) if keep else 1
    return reduced.reshape(dk, dk)


def partial_trace(rho: DensityOperator, keep) -> DensityOperator:
    """Trace out every factor not listed in ``keep``."""
    keep = sorted(set(int(i) for i in keep))
    reduced = ptrace(rho.matrix, rho.space.factors, keep)
    return DensityOperator(reduced, rho.space.subspace(keep))


def herm_exp(h: np.ndarray, t: float, *, atol=1e-10) -> np.ndarray:
    """Unitary ``exp(-i h t)`` of a Hermitian generator via eigendecomposition."""
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f"generator must be square, got shape {h.shape}")
    asym = np.abs(h - h.conj().T).max() if h.size else 0.0
    if asym > atol:
        raise ValueError(f"generator is not Hermitian: asymmetry {asym:.3e}")
    vals, vecs = np.linalg.eigh(h)
    phases = np.exp(-1j * vals * t)
    return (vecs * phases) @ vecs.conj().T


def polar_decompose(f: np.ndarray, p: np.ndarray | None = None):
    """Polar decomposition of ``f`` restricted to the subspace projector ``p``.

    Returns ``(u, pos)`` with ``f @ p = u @ pos``, ``u`` unitary and ``pos``
    positive semidefinite.  With ``p=None`` this is the plain polar
    decomposition of ``f``.
    """
    f = np.asarray(f, dtype=complex)
    if f.ndim != 2 or f.shape[0] != f.shape[1]:
        raise ValueError(f"polar decomposition needs a square matrix, got {f.shape}")
    fp = f if p is None else f @ np.asarray(p, dtype=complex)
    u_l, s, vh = np.linalg.svd(fp)
    u = u_l @ vh
    pos = (vh.conj().T * s) @ vh
    return u, pos


def schmidt_split(vec: np.ndarray, dims, left):
    """Schmidt decomposition at array level.

    Returns ``(coeffs, left_cols, right_cols)`` where the columns are the
    Schmidt vectors of the left / right sides after permuting the left
    factors to the front.
    """
    dims = tuple(int(d) for d in dims)
    left = tuple(sorted(set(int(i) for i in left)))
    if any(i < 0 or i >= len(dims) for i in left):
        raise ValueError(f"left indices {left} out of range for {len(dims)} factors")
    right = tuple(i for i in range(len(dims)) if i not in left)
    if not left or not right:
        raise ValueError("bipartition must leave factors on both sides")
    vec = np.asarray(vec, dtype=complex).reshape(dims)
    mat = vec.transpose(left + right).reshape(
        int(np.prod([dims[i] for i in left])), int(np.prod([dims[i] for i in right]))
    )
    u, s, vh = np.linalg.svd(mat, full_matrices=False)
    # columns of vh.T are the right-side Schmidt vectors (amplitude convention,
    # psi = sum_i s_i u_i (x) v_i with v_i the i-th row of vh)
    return s, u, vh.T


def schmidt(psi: StateVector, left) -> SchmidtData:
    """Schmidt decomposition of ``psi`` with ``left`` naming the left factors."""
    dims = psi.space.factors
    left = tuple(sorted(set(int(i) for i in left)))
    right = tuple(i for i in range(len(dims)) if i not in left)
    coeffs, lv, rv = schmidt_split(psi.amplitudes, dims, left)
    return SchmidtData(
        coefficients=coeffs,
        left_vectors=lv,
        right_vectors=rv,
        left_factors=left,
        right_factors=right,
        left_space=psi.space.subspace(left),
        right_space=psi.space.subspace(right),
    )


def _coerce_density(state) -> np.ndarray:
    if isinstance(state, StateVector):
        return np.outer(state.amplitudes, state.amplitudes.conj())
    if isinstance(state, DensityOperator):
        return state.matrix
    return np.asarray(state, dtype=complex)


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(mat)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.conj().T


def fidelity(rho, sigma) -> float:
    """Uhlmann fidelity, squared convention (1 for identical states).

    Accepts :class:`StateVector` or :class:`DensityOperator` on either side;
    pure inputs take the cheap inner-product paths.
    """
    if isinstance(rho, StateVector) and isinstance(sigma, StateVector):
        ov = np.vdot(rho.amplitudes, sigma.amplitudes)
        return float(min(abs(ov) ** 2, 1.0))
    if isinstance(rho, StateVector):
        val = np.real(np.vdot(rho.amplitudes, _coerce_density(sigma) @ rho.amplitudes))
        return float(min(max(val, 0.0), 1.0))
    if isinstance(sigma, StateVector):
        return fidelity(sigma, rho)
    a = _coerce_density(rho)
    b = _coerce_density(sigma)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    sq = _psd_sqrt(a)
    inner = sq @ b @ sq
    vals = np.clip(np.linalg.eigvalsh(inner), 0.0, None)
    root = np.sqrt(vals).sum()
    return float(min(root**2, 1.0))


def trace_distance(rho, sigma) -> float:
    """Half the trace norm of the difference of two states."""
    delta = _coerce_density(rho) - _coerce_density(sigma)
    vals = np.linalg.eigvalsh(delta)
    return float(0.5 * np.abs(vals).sum())
