"""Zero-error codes for channels with few Kraus operators.

The classical construction grows codewords greedily: each new codeword is
taken orthogonal to ``span{K_i^dag K_j |c_k>}`` over all operator pairs and
previous codewords, which forces the zero-error Gram condition

    <c_k| K_i^dag K_j |c_k'> = delta_kk' M_ij(k)

with ``M(k)`` a d_Y x d_Y positive matrix of unit trace.  Because the span
grows by at most d_Y^2 directions per codeword, the construction cannot stop
before reaching ``ceil(d^n / d_Y^2)`` codewords.

A pair of quantum codewords is carved out of the classical code by a Radon
partition of the Gram matrices: an affine dependence splits the codewords
into two groups whose convex combinations share one barycenter, and the
square-root-weighted superpositions inherit that barycenter as a common Gram
matrix.  The shared matrix is what makes a block decoder possible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize

from .channels import KrausChannel, UnitaryDilation
from .errors import CodeConstructionError, NumericalInvariantError
from .tensor import DensityOperator, HilbertFactorization, polar_decompose, schmidt_split

__all__ = [
    "ClassicalZeroErrorCode",
    "QuantumZeroErrorCode",
    "RadonSplit",
    "BlockDecoder",
    "DecodeBranch",
    "GramCheck",
    "SchmidtStructureReport",
    "guaranteed_sizes",
    "greedy_classical_code",
    "verify_classical",
    "radon_partition",
    "build_quantum_code",
    "verify_quantum",
    "build_decoder",
    "decode",
    "decode_branches",
    "schmidt_structure_check",
]


def guaranteed_sizes(carrier_dim: int, uses: int, env_dim: int) -> tuple[int, int]:
    """Guaranteed (classical, quantum) zero-error code sizes for d, n, d_Y."""
    total = carrier_dim**uses
    classical = -(-total // env_dim**2)  # ceil
    quantum = max(total // (env_dim**4 + env_dim**2), 0)
    return classical, quantum


@dataclass(eq=False)
class ClassicalZeroErrorCode:
    """Orthonormal codewords (columns) with their per-codeword Gram matrices."""

    codewords: np.ndarray
    gram_matrices: np.ndarray
    carrier_dim: int
    uses: int
    env_dim: int

    @property
    def size(self) -> int:
        return self.codewords.shape[1]

    @property
    def rate(self) -> float:
        """Classical bits per channel use."""
        return float(np.log2(self.size) / self.uses)

    def to_json_dict(self) -> dict:
        from .serialize import cplx_to_pairs

        return {
            "kind": "classical",
            "carrier_dim": self.carrier_dim,
            "uses": self.uses,
            "env_dim": self.env_dim,
            "size": self.size,
            "rate": self.rate,
            "codewords": cplx_to_pairs(self.codewords.T),
        }


@dataclass(eq=False)
class QuantumZeroErrorCode:
    """Quantum codewords sharing one Gram matrix across the code space."""

    codewords: np.ndarray
    shared_matrix: np.ndarray
    carrier_dim: int
    uses: int
    env_dim: int
    source_indices: tuple = ()

    @property
    def logical_dim(self) -> int:
        return self.codewords.shape[1]

    @property
    def rate(self) -> float:
        """Qubits per channel use."""
        return float(np.log2(self.logical_dim) / self.uses)

    @property
    def projector(self) -> np.ndarray:
        q = self.codewords
        return q @ q.conj().T

    def state(self, logical) -> np.ndarray:
        """Embed logical coefficients into the code space."""
        logical = np.asarray(logical, dtype=complex).reshape(-1)
        if logical.size != self.logical_dim:
            raise ValueError("logical vector length does not match code dimension")
        return self.codewords @ (logical / np.linalg.norm(logical))

    def to_json_dict(self) -> dict:
        from .serialize import cplx_to_pairs

        return {
            "kind": "quantum",
            "carrier_dim": self.carrier_dim,
            "uses": self.uses,
            "env_dim": self.env_dim,
            "size": self.logical_dim,
            "rate": self.rate,
            "codewords": cplx_to_pairs(self.codewords.T),
            "shared_matrix": cplx_to_pairs(self.shared_matrix),
        }


@dataclass(frozen=True)
class GramCheck:
    """Residual report for a zero-error Gram condition."""

    residual: float
    support_overlap: float
    atol: float

    @property
    def passed(self) -> bool:
        return self.residual <= self.atol and self.support_overlap <= self.atol


def _require_square(ch: KrausChannel) -> int:
    if ch.input_dim != ch.output_dim:
        raise ValueError("decoder construction needs a square channel")
    return ch.input_dim


def _orthonormalize_into(basis_cols: list, row_norms: np.ndarray, block: np.ndarray) -> None:
    """Modified Gram-Schmidt with reorthogonalization; appends new columns."""
    v = block.astype(complex)
    for _ in range(2):
        if basis_cols:
            q = np.column_stack(basis_cols)
            v = v - q @ (q.conj().T @ v)
    # an SVD of the residual block gives an orthonormal basis of the new directions
    u, s, _ = np.linalg.svd(v, full_matrices=False)
    for i in range(s.size):
        if s[i] > 1e-10:
            col = u[:, i]
            basis_cols.append(col)
            row_norms += np.abs(col) ** 2


def greedy_classical_code(
    ch: KrausChannel,
    max_size: int | None = None,
    *,
    uses: int = 1,
    carrier_dim: int | None = None,
) -> ClassicalZeroErrorCode:
    """Grow a classical zero-error code until the product span fills the space.

    The next codeword is the (normalized) residual of the standard basis
    vector farthest from the current span, which is deterministic and keeps
    the construction well conditioned even when the orthogonal complement is
    thin.

    Codewords live on the input space, so the channel may be rectangular.
    """
    dim = ch.input_dim
    if carrier_dim is None:
        root = round(dim ** (1.0 / uses))
        if root**uses != dim:
            raise ValueError(
                f"cannot infer carrier dim: {dim} is not a perfect {uses}-th power"
            )
        carrier_dim = root
    elif carrier_dim**uses != dim:
        raise ValueError(
            f"carrier_dim**uses = {carrier_dim**uses} does not match channel dim {dim}"
        )
    res = ch.completeness_residual()
    if res > 1e-8:
        raise ValueError(f"channel is not CPTP: completeness residual {res:.3e}")
    ops = ch.operators
    basis_cols: list = []
    row_norms = np.zeros(dim)
    codewords = []
    grams = []
    limit = dim if max_size is None else min(max_size, dim)
    while len(codewords) < limit:
        residual_sq = np.clip(1.0 - row_norms, 0.0, None)
        pick = int(np.argmax(residual_sq))
        if residual_sq[pick] < 1e-6:
            break  # the product span covers the whole space
        cand = np.zeros(dim, dtype=complex)
        cand[pick] = 1.0
        for _ in range(2):
            if basis_cols:
                q = np.column_stack(basis_cols)
                cand = cand - q @ (q.conj().T @ cand)
        cand = cand / np.linalg.norm(cand)
        outputs = np.column_stack([k @ cand for k in ops])
        grams.append(outputs.conj().T @ outputs)
        codewords.append(cand)
        products = np.column_stack([k.conj().T @ outputs[:, j] for k in ops for j in range(len(ops))])
        _orthonormalize_into(basis_cols, row_norms, products)
    if not codewords:
        raise CodeConstructionError("could not place a single codeword")
    return ClassicalZeroErrorCode(
        codewords=np.column_stack(codewords),
        gram_matrices=np.array(grams),
        carrier_dim=carrier_dim,
        uses=uses,
        env_dim=ch.env_dim,
    )


def _pairwise_gram(ch: KrausChannel, codewords: np.ndarray):
    """Blocks G[i][j] = (K_i C)^dag (K_j C) over the codeword columns."""
    outputs = [k @ codewords for k in ch.operators]
    dy = len(outputs)
    return [[outputs[i].conj().T @ outputs[j] for j in range(dy)] for i in range(dy)]


def _gram_check(ch: KrausChannel, codewords: np.ndarray, expected, atol: float) -> GramCheck:
    """Residual of <c_k|K_i^dag K_j|c_k'> = delta_kk' expected_ij(k)."""
    blocks = _pairwise_gram(ch, codewords)
    ell = codewords.shape[1]
    dy = len(blocks)
    residual = 0.0
    overlap = 0.0
    off_mask = ~np.eye(ell, dtype=bool)
    for i in range(dy):
        for j in range(dy):
            blk = blocks[i][j]
            if ell > 1:
                residual = max(residual, float(np.abs(blk[off_mask]).max()))
            diag = blk.diagonal()
            want = np.array([expected[k][i, j] for k in range(ell)])
            residual = max(residual, float(np.abs(diag - want).max()))
    # cross-codeword output-support overlap: spectral norm of the d_Y x d_Y
    # matrix of cross inner products, per codeword pair
    for k in range(ell):
        for kp in range(k + 1, ell):
            cross = np.array([[blocks[i][j][k, kp] for j in range(dy)] for i in range(dy)])
            overlap = max(overlap, float(np.linalg.norm(cross, 2)))
    return GramCheck(residual=residual, support_overlap=overlap, atol=atol)


def verify_classical(code: ClassicalZeroErrorCode, ch: KrausChannel, atol=1e-9) -> GramCheck:
    return _gram_check(ch, code.codewords, list(code.gram_matrices), atol)


def verify_quantum(code: QuantumZeroErrorCode, ch: KrausChannel, atol=1e-8) -> GramCheck:
    expected = [code.shared_matrix] * code.logical_dim
    return _gram_check(ch, code.codewords, expected, atol)


@dataclass(eq=False)
class RadonSplit:
    """Two index groups with convex weights sharing one barycenter."""

    groups: tuple[tuple[int, ...], tuple[int, ...]]
    weights: tuple[np.ndarray, np.ndarray]
    barycenter: np.ndarray
    dependence: np.ndarray


def radon_partition(points, *, ztol=1e-12) -> RadonSplit:
    """Split Hermitian matrices into two groups with equal convex combinations.

    Needs an affine dependence among the points, which is guaranteed once
    there are at least (real affine dimension + 2) of them; raises
    :class:`CodeConstructionError` otherwise.
    """
    pts = [np.asarray(p, dtype=complex) for p in points]
    if not pts:
        raise CodeConstructionError("no points to partition")
    shape = pts[0].shape
    if any(p.shape != shape for p in pts):
        raise CodeConstructionError("points must share one shape")
    rows = [np.concatenate([p.real.reshape(-1), p.imag.reshape(-1), [1.0]]) for p in pts]
    a = np.array(rows).T  # (2*d*d + 1) x ell
    kernel = scipy.linalg.null_space(a)
    if kernel.shape[1] == 0:
        raise CodeConstructionError(
            f"insufficient points for an affine dependence: got {len(pts)} "
            f"of real affine dimension up to {shape[0] * shape[1]}"
        )
    alpha = kernel[:, 0]
    lead = np.flatnonzero(np.abs(alpha) > ztol)
    if lead.size == 0:
        raise CodeConstructionError("degenerate affine dependence")
    if alpha[lead[0]] < 0:
        alpha = -alpha
    cutoff = ztol * np.abs(alpha).max()
    pos = tuple(int(i) for i in np.flatnonzero(alpha > cutoff))
    neg = tuple(int(i) for i in np.flatnonzero(alpha < -cutoff))
    if not pos or not neg:
        raise CodeConstructionError("affine dependence is one-sided")
    s_pos = float(alpha[list(pos)].sum())
    w_pos = alpha[list(pos)] / s_pos
    w_neg = -alpha[list(neg)] / float(-alpha[list(neg)].sum())
    bary_pos = sum(w * pts[i] for w, i in zip(w_pos, pos))
    bary_neg = sum(w * pts[i] for w, i in zip(w_neg, neg))
    return RadonSplit(
        groups=(pos, neg),
        weights=(w_pos, w_neg),
        barycenter=(bary_pos + bary_neg) / 2,
        dependence=alpha,
    )


def _pooled_weights(grams: np.ndarray, pools: list, dy: int):
    """Convex weights per pool equalizing the pool barycenters (linear program)."""
    n_pools = len(pools)
    sizes = [len(p) for p in pools]
    total = sum(sizes)
    offs = np.concatenate([[0], np.cumsum(sizes)])
    vec_dim = 2 * dy * dy

    def vecs(pool):
        return np.array(
            [np.concatenate([grams[k].real.reshape(-1), grams[k].imag.reshape(-1)]) for k in pool]
        ).T

    rows = []
    rhs = []
    first = vecs(pools[0])
    for g in range(1, n_pools):
        block = np.zeros((vec_dim, total))
        block[:, offs[0] : offs[1]] = first
        block[:, offs[g] : offs[g + 1]] = -vecs(pools[g])
        rows.append(block)
        rhs.append(np.zeros(vec_dim))
    for g in range(n_pools):
        norm_row = np.zeros(total)
        norm_row[offs[g] : offs[g + 1]] = 1.0
        rows.append(norm_row.reshape(1, -1))
        rhs.append([1.0])
    a_eq = np.vstack(rows)
    b_eq = np.concatenate(rhs)
    res = scipy.optimize.linprog(
        c=np.zeros(total), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs"
    )
    if not res.success:
        raise CodeConstructionError(
            f"no convex weights equalize the {n_pools} pool barycenters "
            f"(feasibility search failed: {res.message})"
        )
    return [res.x[offs[g] : offs[g + 1]] for g in range(n_pools)]


def build_quantum_code(
    code: ClassicalZeroErrorCode,
    ch: KrausChannel,
    logical_dim: int = 2,
    *,
    pool_size: int | None = None,
) -> QuantumZeroErrorCode:
    """Superpose classical codewords into quantum codewords with one shared Gram.

    ``logical_dim=2`` uses the Radon construction, which always succeeds with
    at least d_Y^2 + 2 classical codewords.  Larger logical dimensions run a
    feasibility search over disjoint codeword pools and raise
    :class:`CodeConstructionError` when no equalizing weights exist.
    """
    dy = ch.env_dim
    need = dy**2 + 2
    if pool_size is None:
        # The Radon guarantee needs d_Y^2 + 2 points; an explicit pool_size
        # below that is allowed for degenerate Gram families and falls back
        # on the affine-dependence check inside radon_partition.
        pool_size = need
    elif pool_size < 2:
        raise ValueError("pool_size must be at least 2")
    if logical_dim < 2:
        raise ValueError("logical_dim must be at least 2")
    if logical_dim == 2:
        if code.size < pool_size:
            raise CodeConstructionError(
                f"need at least {pool_size} classical codewords, have {code.size}"
            )
        pool = list(range(min(code.size, pool_size)))
        split = radon_partition([code.gram_matrices[k] for k in pool])
        groups = [[pool[i] for i in grp] for grp in split.groups]
        weights = list(split.weights)
        shared = split.barycenter
    else:
        if code.size < logical_dim * pool_size:
            raise CodeConstructionError(
                f"need {logical_dim * pool_size} classical codewords for "
                f"{logical_dim} pools of {pool_size}, have {code.size}"
            )
        groups = [
            list(range(g * pool_size, (g + 1) * pool_size)) for g in range(logical_dim)
        ]
        weights = _pooled_weights(code.gram_matrices, groups, dy)
        shared = sum(
            w * code.gram_matrices[k] for w, k in zip(weights[0], groups[0])
        )
    quantum = []
    sources = []
    for grp, w in zip(groups, weights):
        vec = code.codewords[:, grp] @ np.sqrt(np.clip(w, 0.0, None)).astype(complex)
        nrm = np.linalg.norm(vec)
        if abs(nrm - 1.0) > 1e-8:
            raise NumericalInvariantError(
                f"quantum codeword norm drifted to {nrm:.12f}"
            )
        quantum.append(vec / nrm)
        sources.append(tuple(grp))
    return QuantumZeroErrorCode(
        codewords=np.column_stack(quantum),
        shared_matrix=shared,
        carrier_dim=code.carrier_dim,
        uses=code.uses,
        env_dim=dy,
        source_indices=tuple(sources),
    )


@dataclass(eq=False)
class BlockDecoder:
    """Projective blocks plus correction unitaries for a quantum code.

    Diagonalizing the shared Gram matrix rotates the Kraus set into operators
    ``F_j`` that act on the code space as sqrt(lambda_j) times an isometry;
    the polar decomposition of each ``F_j P`` yields the correction ``U_j``
    and the measurement block ``P_j = U_j P U_j^dag``.
    """

    code: QuantumZeroErrorCode
    rotation: np.ndarray
    eigenvalues: np.ndarray
    blocks: list  # (index j, lambda_j, U_j, P_j) for lambda_j above threshold
    diagnostics: dict = field(default_factory=dict)

    @property
    def projector(self) -> np.ndarray:
        return self.code.projector


@dataclass(eq=False)
class DecodeBranch:
    outcome: int
    probability: float
    state: DensityOperator


def build_decoder(qc: QuantumZeroErrorCode, ch: KrausChannel, *, lam_tol=1e-12) -> BlockDecoder:
    dim = _require_square(ch)
    lam, rot = np.linalg.eigh(qc.shared_matrix)
    lam = np.clip(lam, 0.0, None)
    order = np.argsort(lam)[::-1]
    lam = lam[order]
    rot = rot[:, order]
    p = qc.projector
    blocks = []
    pos_residual = 0.0
    for j in range(lam.size):
        if lam[j] <= lam_tol:
            continue
        f = sum(rot[i, j] * ch.operators[i] for i in range(len(ch.operators)))
        u, pos = polar_decompose(f, p)
        pos_residual = max(pos_residual, float(np.abs(pos - np.sqrt(lam[j]) * p).max()))
        pj = u @ p @ u.conj().T
        blocks.append((j, float(lam[j]), u, pj))
    ortho = 0.0
    for a in range(len(blocks)):
        for b in range(len(blocks)):
            prod = blocks[a][3] @ blocks[b][3]
            want = blocks[a][3] if a == b else 0.0
            ortho = max(ortho, float(np.abs(prod - want).max()))
    diagnostics = {
        "positive_part_residual": pos_residual,
        "block_orthogonality": ortho,
        "eigenvalue_sum": float(lam.sum()),
    }
    if ortho > 1e-8:
        raise NumericalInvariantError(
            f"decoder blocks are not orthogonal: residual {ortho:.3e}"
        )
    return BlockDecoder(
        code=qc, rotation=rot, eigenvalues=lam, blocks=blocks, diagnostics=diagnostics
    )


def decode_branches(dec: BlockDecoder, rho, *, leak_tol=1e-8) -> list[DecodeBranch]:
    """All measurement outcomes with their probabilities and corrected states."""
    mat = rho.matrix if isinstance(rho, DensityOperator) else np.asarray(rho, dtype=complex)
    dim = mat.shape[0]
    space = HilbertFactorization((dim,))
    p = dec.projector
    branches = []
    covered = 0.0
    for j, lam, u, pj in dec.blocks:
        sub = pj @ mat @ pj
        prob = float(np.real(np.trace(sub)))
        if prob < -1e-10:
            raise NumericalInvariantError(f"negative branch probability {prob:.3e}")
        prob = max(prob, 0.0)
        covered += prob
        if prob <= 1e-14:
            continue
        corrected = u.conj().T @ sub @ u / prob
        branches.append(
            DecodeBranch(outcome=j, probability=prob, state=DensityOperator(corrected, space))
        )
    leakage = 1.0 - covered
    if leakage > leak_tol:
        raise NumericalInvariantError(
            f"state leaks outside the decoder blocks: leakage {leakage:.3e}"
        )
    return branches


def decode(dec: BlockDecoder, rho, rng: np.random.Generator | None = None) -> DecodeBranch:
    """Sample one measurement branch (seeded generator for reproducibility)."""
    branches = decode_branches(dec, rho)
    if rng is None:
        rng = np.random.default_rng(0)
    probs = np.array([b.probability for b in branches])
    probs = probs / probs.sum()
    pick = rng.choice(len(branches), p=probs)
    return branches[pick]


@dataclass(frozen=True)
class SchmidtStructureReport:
    reconstruction_residual: float
    coefficient_residual: float
    subspace_residual: float

    def max_residual(self) -> float:
        return max(
            self.reconstruction_residual,
            self.coefficient_residual,
            self.subspace_residual,
        )


def schmidt_structure_check(
    dec: BlockDecoder,
    dilation: UnitaryDilation,
    logical,
    *,
    degeneracy_tol=1e-8,
) -> SchmidtStructureReport:
    """Compare U(psi (x) omega) with the block form of the dilated channel.

    For a code state psi the joint output must equal
    ``sum_j sqrt(lambda_j) (P_j U_j psi) (x) zeta_j`` with environment vectors
    ``zeta_j = sum_i conj(O_ij) xi_i``.  Schmidt vectors are compared per
    degenerate eigenvalue group (individual vectors are only defined up to a
    rotation inside a group).
    """
    qc = dec.code
    if dilation.sys_dim != qc.codewords.shape[0]:
        raise ValueError("dilation does not act on the code's carrier space")
    psi = qc.state(logical)
    ds, de = dilation.sys_dim, dilation.env_dim
    u4 = dilation.unitary.reshape(ds, de, ds, de)
    joint = np.einsum("acbd,b,d->ac", u4, psi, dilation.omega).reshape(-1)
    expected = np.zeros_like(joint)
    pieces = []
    for j, lam, u, pj in dec.blocks:
        zeta = dilation.env_basis @ dec.rotation[:, j].conj()
        left = pj @ (u @ psi)
        pieces.append((lam, left, zeta))
        expected += np.sqrt(lam) * np.kron(left, zeta)
    recon = float(np.abs(joint - expected).max())
    coeffs, lv, _ = schmidt_split(joint, (ds, de), [0])
    want = np.sqrt(np.array(sorted((lam for lam, _, _ in pieces), reverse=True)))
    k = want.size
    coeff_res = float(np.abs(coeffs[:k] - want).max()) if k else 0.0
    if coeffs.size > k:
        coeff_res = max(coeff_res, float(np.abs(coeffs[k:]).max()))
    # group by degenerate sqrt(lambda) and compare spanned subspaces
    sub_res = 0.0
    lams = np.array([lam for lam, _, _ in pieces])
    remaining = list(range(len(pieces)))
    svd_pos = 0
    while remaining:
        head = remaining[0]
        group = [i for i in remaining if abs(lams[i] - lams[head]) <= degeneracy_tol]
        remaining = [i for i in remaining if i not in group]
        ours = np.column_stack([pieces[i][1] / np.linalg.norm(pieces[i][1]) for i in group])
        theirs = lv[:, svd_pos : svd_pos + len(group)]
        svd_pos += len(group)
        proj = theirs @ theirs.conj().T
        sub_res = max(sub_res, float(np.abs(ours - proj @ ours).max()))
    return SchmidtStructureReport(
        reconstruction_residual=recon,
        coefficient_residual=coeff_res,
        subspace_residual=sub_res,
    )
