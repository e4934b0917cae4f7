"""Kraus channels, unitary dilations, Choi matrices and multi-use families.

The vec convention is column stacking, ``vec(M) = M.T.reshape(-1)``, so the
Choi matrix of a channel is ``sum_j vec(K_j) vec(K_j)^dag`` with the input
factor first.  Two channels are compared through their Choi matrices in
operator norm, never by elementwise Kraus comparison (Kraus sets are only
defined up to an isometry on the environment index).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import NumericalInvariantError
from .random import haar_unitary, random_density_matrix
from .serialize import cplx_to_pairs, pairs_to_cplx
from .tensor import DensityOperator, HilbertFactorization, ptrace, tensor_product

__all__ = [
    "KrausChannel",
    "UnitaryDilation",
    "CptpReport",
    "MultiUseFamily",
    "verify_cptp",
    "dilation_to_kraus",
    "kraus_to_dilation",
    "choi_matrix",
    "choi_distance",
    "compose",
    "marginal_consistency",
    "env_rate_sequence",
    "random_dilation",
    "collision_family",
]

#: Frobenius-norm threshold below which extracted Kraus operators are dropped
PRUNE_TOL = 1e-14


def _vec(mat: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization."""
    return np.asarray(mat).T.reshape(-1)


@dataclass(eq=False)
class KrausChannel:
    """A linear map given by Kraus operators ``rho -> sum_j K_j rho K_j^dag``.

    Operators may be rectangular (output dim x input dim).  Construction does
    not require trace preservation -- :func:`verify_cptp` reports the residual
    -- but :meth:`apply` refuses channels that are not CPTP within tolerance.
    """

    operators: list
    input_space: HilbertFactorization | None = None
    output_space: HilbertFactorization | None = None

    def __post_init__(self):
        ops = [np.asarray(k, dtype=complex) for k in self.operators]
        if not ops:
            raise ValueError("a channel needs at least one Kraus operator")
        shape = ops[0].shape
        if len(shape) != 2:
            raise ValueError("Kraus operators must be matrices")
        if any(k.shape != shape for k in ops):
            raise ValueError("all Kraus operators must share one shape")
        self.operators = ops
        if self.input_space is None:
            self.input_space = HilbertFactorization((shape[1],))
        if self.output_space is None:
            self.output_space = HilbertFactorization((shape[0],))
        if self.input_space.total != shape[1] or self.output_space.total != shape[0]:
            raise ValueError(
                f"declared spaces {self.input_space.factors} -> "
                f"{self.output_space.factors} do not match operator shape {shape}"
            )

    @property
    def input_dim(self) -> int:
        return self.operators[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.operators[0].shape[0]

    @property
    def env_dim(self) -> int:
        """Environment dimension of this representation (= operator count)."""
        return len(self.operators)

    def completeness_residual(self) -> float:
        acc = np.zeros((self.input_dim, self.input_dim), dtype=complex)
        for k in self.operators:
            acc += k.conj().T @ k
        return float(np.abs(acc - np.eye(self.input_dim)).max())

    def apply(self, rho, *, atol=1e-8):
        """Apply the channel to a density matrix (array or DensityOperator)."""
        mat = rho.matrix if isinstance(rho, DensityOperator) else np.asarray(rho, dtype=complex)
        if mat.shape != (self.input_dim, self.input_dim):
            raise ValueError(
                f"input shape {mat.shape} does not match channel input dim {self.input_dim}"
            )
        res = self.completeness_residual()
        if res > atol:
            raise NumericalInvariantError(
                f"channel is not trace preserving: completeness residual {res:.3e}"
            )
        out = np.zeros((self.output_dim, self.output_dim), dtype=complex)
        for k in self.operators:
            out += k @ mat @ k.conj().T
        if isinstance(rho, DensityOperator):
            return DensityOperator(out, self.output_space)
        return out

    def to_json_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "output_dim": self.output_dim,
            "env_dim": self.env_dim,
            "input_factors": list(self.input_space.factors),
            "output_factors": list(self.output_space.factors),
            "operators": [cplx_to_pairs(k) for k in self.operators],
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "KrausChannel":
        ops = [pairs_to_cplx(k) for k in doc["operators"]]
        return cls(
            ops,
            input_space=HilbertFactorization(tuple(doc["input_factors"])),
            output_space=HilbertFactorization(tuple(doc["output_factors"])),
        )


@dataclass(eq=False)
class UnitaryDilation:
    """A unitary on system (x) environment together with the fiduciary env state.

    The system is the slow factor.  ``env_basis`` columns are the states the
    environment is read out in; Kraus operators are the partial matrix
    elements ``<xi_j| U |omega>``.
    """

    unitary: np.ndarray
    sys_dim: int
    env_dim: int
    omega: np.ndarray | None = None
    env_basis: np.ndarray | None = None

    def __post_init__(self):
        self.unitary = np.asarray(self.unitary, dtype=complex)
        d = self.sys_dim * self.env_dim
        if self.unitary.shape != (d, d):
            raise ValueError(
                f"unitary shape {self.unitary.shape} does not match "
                f"sys_dim*env_dim = {d}"
            )
        dev = np.abs(self.unitary.conj().T @ self.unitary - np.eye(d)).max()
        if dev > 1e-10:
            raise ValueError(f"dilation matrix is not unitary: deviation {dev:.3e}")
        if self.omega is None:
            self.omega = np.zeros(self.env_dim, dtype=complex)
            self.omega[0] = 1.0
        else:
            self.omega = np.asarray(self.omega, dtype=complex).reshape(-1)
            if self.omega.size != self.env_dim:
                raise ValueError("omega length does not match env_dim")
            if abs(np.linalg.norm(self.omega) - 1.0) > 1e-10:
                raise ValueError("omega must be normalized")
        if self.env_basis is None:
            self.env_basis = np.eye(self.env_dim, dtype=complex)
        else:
            self.env_basis = np.asarray(self.env_basis, dtype=complex)
            if self.env_basis.shape != (self.env_dim, self.env_dim):
                raise ValueError("env_basis must be env_dim x env_dim")
            dev = np.abs(self.env_basis.conj().T @ self.env_basis - np.eye(self.env_dim)).max()
            if dev > 1e-10:
                raise ValueError(f"env_basis is not unitary: deviation {dev:.3e}")


@dataclass(frozen=True)
class CptpReport:
    residual: float
    atol: float

    @property
    def passed(self) -> bool:
        return self.residual <= self.atol


def verify_cptp(ch: KrausChannel, atol=1e-10) -> CptpReport:
    """Completeness residual ``max |sum_j K_j^dag K_j - I|``."""
    return CptpReport(residual=ch.completeness_residual(), atol=atol)


def dilation_to_kraus(dl: UnitaryDilation, *, prune_tol=PRUNE_TOL) -> KrausChannel:
    """Extract Kraus operators from a dilation; near-zero operators are pruned."""
    ds, de = dl.sys_dim, dl.env_dim
    u4 = dl.unitary.reshape(ds, de, ds, de)
    # K_j[a, b] = sum_{c,d} conj(xi_j[c]) U[(a,c),(b,d)] omega[d]
    partial = np.einsum("acbd,d->cab", u4, dl.omega)
    kraus = np.einsum("jc,cab->jab", dl.env_basis.conj().T, partial)
    ops = [kraus[j] for j in range(de)]
    kept = [k for k in ops if np.linalg.norm(k) >= prune_tol]
    if not kept:
        kept = [ops[0]]
    return KrausChannel(kept)


def kraus_to_dilation(ch: KrausChannel, *, atol=1e-8) -> UnitaryDilation:
    """Build a unitary dilation whose env dimension equals the operator count.

    The isometry ``V|psi> = sum_j K_j|psi> (x) |j>`` fills the env-0 input
    columns; the remaining columns are completed deterministically from the
    orthogonal complement (QR).
    """
    if ch.input_dim != ch.output_dim:
        raise ValueError("dilations are defined for square channels")
    res = ch.completeness_residual()
    if res > atol:
        raise ValueError(f"channel is not CPTP: completeness residual {res:.3e}")
    ds = ch.input_dim
    de = ch.env_dim
    d = ds * de
    # V[(a, c), b] = K_c[a, b]
    v = np.transpose(np.array(ch.operators), (1, 0, 2)).reshape(d, ds)
    q = np.linalg.qr(v, mode="complete")[0]
    complement = q[:, ds:]
    u = np.zeros((d, d), dtype=complex)
    for b in range(ds):
        u[:, b * de] = v[:, b]
        for e in range(1, de):
            u[:, b * de + e] = complement[:, b * (de - 1) + (e - 1)]
    dev = np.abs(u.conj().T @ u - np.eye(d)).max()
    if dev > 1e-10:
        raise NumericalInvariantError(f"dilation completion lost unitarity: {dev:.3e}")
    return UnitaryDilation(u, sys_dim=ds, env_dim=de)


def choi_matrix(ch: KrausChannel) -> np.ndarray:
    """Choi matrix ``sum_j vec(K_j) vec(K_j)^dag`` (input factor first)."""
    d = ch.input_dim * ch.output_dim
    c = np.zeros((d, d), dtype=complex)
    for k in ch.operators:
        v = _vec(k)
        c += np.outer(v, v.conj())
    return c


def choi_distance(a: KrausChannel, b: KrausChannel) -> float:
    """Operator-norm distance between Choi matrices."""
    if a.input_dim != b.input_dim or a.output_dim != b.output_dim:
        raise ValueError("channels act between different spaces")
    diff = choi_matrix(a) - choi_matrix(b)
    return float(np.linalg.norm(diff, 2))


def compose(a: KrausChannel, b: KrausChannel, mode: str = "sequential") -> KrausChannel:
    """Sequential ``a after b`` ({A_i B_j}) or parallel ({A_i (x) B_j})."""
    if mode == "sequential":
        if b.output_dim != a.input_dim:
            raise ValueError(
                f"cannot chain: inner dims {b.output_dim} -> {a.input_dim} disagree"
            )
        ops = [ai @ bj for ai in a.operators for bj in b.operators]
        return KrausChannel(ops, input_space=b.input_space, output_space=a.output_space)
    if mode == "parallel":
        ops = [tensor_product(ai, bj) for ai in a.operators for bj in b.operators]
        in_space = HilbertFactorization(a.input_space.factors + b.input_space.factors)
        out_space = HilbertFactorization(a.output_space.factors + b.output_space.factors)
        return KrausChannel(ops, input_space=in_space, output_space=out_space)
    raise ValueError(f"unknown composition mode {mode!r}")


@dataclass(eq=False)
class MultiUseFamily:
    """A family n -> channel on n carriers with a declared environment budget.

    ``env_dims`` may be a callable or a sequence (1-indexed by padding
    position 0).  ``traced_factors`` names the output factors of the n-use
    channel that belong to the n-th use, so marginal consistency knows what
    to trace; the default assumes one output factor per use, appended last.
    """

    generator: Callable[[int], KrausChannel]
    carrier_dim: int
    env_dims: Callable[[int], int] | Sequence[int]
    traced_factors: Callable[[int], tuple[int, ...]] | None = None
    _cache: dict = field(default_factory=dict, repr=False, init=False)

    def channel(self, n: int) -> KrausChannel:
        if n < 1:
            raise ValueError("use count must be >= 1")
        if n not in self._cache:
            self._cache[n] = self.generator(n)
        return self._cache[n]

    def env_dim_at(self, n: int) -> int:
        if callable(self.env_dims):
            return int(self.env_dims(n))
        return int(self.env_dims[n - 1])

    def traced_at(self, n: int) -> tuple[int, ...]:
        if self.traced_factors is not None:
            return tuple(self.traced_factors(n))
        ch = self.channel(n)
        return (len(ch.output_space.factors) - 1,)


def marginal_consistency(
    family: MultiUseFamily, n: int, atol=1e-9, *, panel=4, seed=20260821
) -> bool:
    """Check ``Tr_n[Lambda^n(rho (x) sigma)] = Lambda^(n-1)(rho)`` on random inputs."""
    if n < 2:
        raise ValueError("marginal consistency needs n >= 2")
    ch_n = family.channel(n)
    ch_prev = family.channel(n - 1)
    traced = set(family.traced_at(n))
    keep = [i for i in range(len(ch_n.output_space.factors)) if i not in traced]
    rng = np.random.default_rng(seed)
    d = family.carrier_dim
    for _ in range(panel):
        rho = random_density_matrix((d,) * (n - 1), rng).matrix
        sigma = random_density_matrix((d,), rng).matrix
        joint = tensor_product(rho, sigma)
        lhs = ptrace(ch_n.apply(joint), ch_n.output_space.factors, keep)
        rhs = ch_prev.apply(rho)
        if np.abs(lhs - rhs).max() > atol:
            return False
    return True


def env_rate_sequence(family: MultiUseFamily, n_max: int) -> list[float]:
    """Per-use environment cost ``(1/n) log2 env_dim(n)`` for n = 1..n_max.

    A vanishing tail is the signature of a link that can be represented with
    a sub-exponential environment.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    return [np.log2(family.env_dim_at(n)) / n for n in range(1, n_max + 1)]


def random_dilation(sys_dim: int, env_dim: int, rng: np.random.Generator) -> UnitaryDilation:
    """Haar-random dilation with the fiduciary env state |0>."""
    return UnitaryDilation(
        haar_unitary(sys_dim * env_dim, rng), sys_dim=sys_dim, env_dim=env_dim
    )


def collision_family(
    carrier_dim: int,
    memory_dim: int,
    seed: int | None = None,
    *,
    coupling: np.ndarray | None = None,
) -> MultiUseFamily:
    """Multi-use family from one carrier-memory unitary applied in sequence.

    Each carrier couples once, in order, to the same memory (initially |0>),
    so the environment dimension stays ``memory_dim`` for every n and the
    marginals are consistent by construction.  Kraus operators are built by
    the tensor recursion ``K^n_j = sum_i K^(n-1)_i (x) A_{j i}`` with
    ``A_{j i} = <j|U|i>`` the memory-indexed blocks of the coupling unitary.
    """
    d, dm = int(carrier_dim), int(memory_dim)
    if coupling is None:
        if seed is None:
            raise ValueError("collision_family needs a seed or an explicit coupling")
        coupling = haar_unitary(d * dm, np.random.default_rng(seed))
    coupling = np.asarray(coupling, dtype=complex)
    if coupling.shape != (d * dm, d * dm):
        raise ValueError(
            f"coupling shape {coupling.shape} does not match carrier*memory = {d * dm}"
        )
    u4 = coupling.reshape(d, dm, d, dm)
    blocks = np.einsum("ajbi->jiab", u4)  # blocks[j, i] = <j|U|i>, a d x d matrix

    def generate(n: int) -> KrausChannel:
        ops = [blocks[i, 0] for i in range(dm)]
        for _ in range(1, n):
            ops = [
                sum(tensor_product(ops[i], blocks[j, i]) for i in range(dm))
                for j in range(dm)
            ]
        space = HilbertFactorization((d,) * n)
        return KrausChannel(ops, input_space=space, output_space=space)

    return MultiUseFamily(
        generator=generate,
        carrier_dim=d,
        env_dims=lambda n: dm,
    )
