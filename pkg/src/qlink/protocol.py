"""Round-based dual-rail state transfer over the two-chain link.

Each round loads one sender memory onto the chain pair and gives the
receiver a block of fresh memories to catch it: round k runs one sender
swap followed by ``m_k`` repetitions of (free evolution, receiver swap).
Transfer succeeds when every receiver block ends up holding exactly one
excitation; the level of that excitation (which rail it rode) carries the
logical qubit, and the position within the block is junk.

The final state splits into three orthogonal pieces, sorted by what the
chains and the receiver blocks hold:

* success: chains in vacuum and every block showing the one-excitation
  pattern (weight ``pi_n``),
* vacuum failure: chains empty but some block pattern wrong (weight
  ``eta0 - pi_n``),
* mediator failure: at least one excitation stuck on the chains
  (weight ``1 - eta0``).

Dense vectors over the memory registers index sender memory 0 slowest,
then the remaining sender cells, then the receiver cells, each ternary;
this matches :func:`qlink.link.embed_alice` and the sector config layout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channels import KrausChannel
from .errors import NumericalInvariantError
from .link import (
    LinkModel,
    Schedule,
    SectorSpace,
    apply_steps,
    embed_alice,
    protocol_steps,
    round_step_counts,
    sector_space,
)
from .random import random_state_vector
from .tensor import (
    DensityOperator,
    HilbertFactorization,
    SchmidtData,
    StateVector,
    fidelity,
    schmidt_split,
)

__all__ = [
    "ProtocolRun",
    "ReconstructionIsometries",
    "InputIndependenceReport",
    "NoBranchReport",
    "RateReport",
    "run",
    "success_probabilities",
    "parity_measurement",
    "recover_yes",
    "verify_input_independence",
    "reconstruction_isometries",
    "no_branch_channel",
    "verify_no_branch",
    "resource_accounting",
]

# Squared weight below which a branch counts as absent.
_WEIGHT_TOL = 1e-12
# Largest dense memory-register dimension for component vectors.
_DENSE_CAP = 3**10
# Caps for quadratic-size objects (failure density matrix, unitary completion).
_MATRIX_CAP = 3**6

_LOG2_3 = math.log2(3.0)


# --------------------------------------------------------------- masks


def _vacuum_mask(space: SectorSpace) -> np.ndarray:
    return space.configs[:, space.n_memories :].sum(axis=1) == 0


def _good_block_mask(space: SectorSpace, schedule: Schedule, upto: int) -> np.ndarray:
    """Rows whose first ``upto`` receiver blocks each hold exactly one cell."""
    bob = space.configs[:, space.n_alice : space.n_memories]
    mask = np.ones(space.dim, dtype=bool)
    off = 0
    for m_k in schedule.bob_memories[:upto]:
        occupied = (bob[:, off : off + m_k] != 2).sum(axis=1)
        mask &= occupied == 1
        off += m_k
    return mask


def _memory_indices(space: SectorSpace) -> np.ndarray:
    """Dense ternary index over all memory cells, cell 0 slowest."""
    cells = space.configs[:, : space.n_memories].astype(np.int64)
    powers = 3 ** np.arange(space.n_memories - 1, -1, -1, dtype=np.int64)
    return cells @ powers


def _chain_indices(space: SectorSpace) -> np.ndarray:
    """Dense binary index over the spin sites, site 0 slowest."""
    spins = space.configs[:, space.n_memories :].astype(np.int64)
    powers = 2 ** np.arange(spins.shape[1] - 1, -1, -1, dtype=np.int64)
    return spins @ powers


def _coerce_logical(psi, n: int) -> StateVector:
    if isinstance(psi, StateVector):
        if psi.space.factors != (2,) * n:
            raise ValueError(
                f"input state must live on {(2,) * n}, got {psi.space.factors}"
            )
        return psi
    return StateVector(np.asarray(psi, dtype=complex), (2,) * n)


def _transfer_setup(model: LinkModel, schedule: Schedule, max_dim):
    space = sector_space(
        schedule.rounds,
        schedule.total_memories,
        model.sites,
        schedule.rounds,
        max_dim=max_dim,
    )
    steps = protocol_steps(space, model, schedule)
    return space, steps


# --------------------------------------------------------------- the run


@dataclass(frozen=True, eq=False)
class ProtocolRun:
    """Everything measured on one transmission of a logical state."""

    model: LinkModel
    schedule: Schedule
    space: SectorSpace
    input_psi: StateVector
    final_state: StateVector
    eta0: float
    pi_n: float
    p_list: tuple[float, ...]
    vacuum_mask: np.ndarray
    yes_mask: np.ndarray
    phi_component: StateVector | None
    delta_component: StateVector | None
    chi_component: StateVector | None
    sigma_no: DensityOperator | None
    schmidt: SchmidtData | None
    isometries: "ReconstructionIsometries | None" = field(default=None)

    def summary(self) -> dict:
        out = {
            "rounds": self.schedule.rounds,
            "bob_memories": list(self.schedule.bob_memories),
            "tau": self.schedule.tau,
            "sites": self.model.sites,
            "sector_dim": self.space.dim,
            "eta0": self.eta0,
            "success_probability": self.pi_n,
            "round_success": list(self.p_list),
            "weights": {
                "success": self.pi_n,
                "vacuum_failure": max(self.eta0 - self.pi_n, 0.0),
                "mediator_failure": max(1.0 - self.eta0, 0.0),
            },
        }
        if self.schmidt is not None:
            lam = self.schmidt.coefficients**2
            out["mediator_spectrum_head"] = [float(x) for x in lam[:4]]
        return out


def _success_trajectory(space, steps, schedule, v0, vac) -> tuple[float, ...]:
    """Per-round success probabilities along the all-success branch.

    After round k the state is projected onto (chains in vacuum, blocks
    1..k each holding one excitation) and renormalized, so entry k is the
    probability of a clean round given all earlier rounds were clean.
    """
    counts = round_step_counts(schedule)
    v = v0
    pos = 0
    probs: list[float] = []
    for k in range(schedule.rounds):
        v = apply_steps(steps[pos : pos + counts[k]], v)
        pos += counts[k]
        mask = vac & _good_block_mask(space, schedule, k + 1)
        p_k = float(np.sum(np.abs(v[mask]) ** 2))
        probs.append(p_k)
        if p_k <= _WEIGHT_TOL:
            probs.extend(0.0 for _ in range(schedule.rounds - k - 1))
            break
        v = np.where(mask, v, 0.0) / math.sqrt(p_k)
    return tuple(probs)


def _embed_memory(final, mask, mem_idx, mem_dim) -> np.ndarray:
    out = np.zeros(mem_dim, dtype=complex)
    rows = np.flatnonzero(mask)
    out[mem_idx[rows]] = final[rows]
    return out


def run(model: LinkModel, schedule: Schedule, psi, *, isometries: bool = False,
        max_dim: int | None = None) -> ProtocolRun:
    """Transmit ``psi`` and decompose the outcome.

    ``psi`` is a state on the sender's logical qubits (one per round).
    ``max_dim`` bounds the excitation-sector dimension.  Components that
    would need a dense memory register above internal caps are left None.
    """
    n, m = schedule.rounds, schedule.total_memories
    logical = _coerce_logical(psi, n)
    space, steps = _transfer_setup(model, schedule, max_dim)
    v0 = embed_alice(space, logical.amplitudes)
    final = apply_steps(steps, v0)

    vac = _vacuum_mask(space)
    yes = _good_block_mask(space, schedule, n)
    eta0 = float(np.sum(np.abs(final[vac]) ** 2))
    pi_n = float(np.sum(np.abs(final[yes]) ** 2))
    p_list = _success_trajectory(
        space, steps, schedule, embed_alice(space, logical.amplitudes), vac
    )

    mem_dim = 3 ** (n + m)
    mem_space = HilbertFactorization((3,) * (n + m))
    mem_idx = _memory_indices(space)

    phi = delta = chi = None
    if 1.0 - eta0 > _WEIGHT_TOL:
        chi = StateVector.from_unnormalized(np.where(vac, 0.0, final), (space.dim,))
    if mem_dim <= _DENSE_CAP:
        if pi_n > _WEIGHT_TOL:
            phi = StateVector.from_unnormalized(
                _embed_memory(final, yes, mem_idx, mem_dim), mem_space
            )
        if eta0 - pi_n > _WEIGHT_TOL:
            delta = StateVector.from_unnormalized(
                _embed_memory(final, vac & ~yes, mem_idx, mem_dim), mem_space
            )

    sigma = None
    if pi_n < 1.0 - _WEIGHT_TOL and mem_dim <= _MATRIX_CAP:
        acc = np.zeros((mem_dim, mem_dim), dtype=complex)
        if delta is not None:
            d = delta.amplitudes
            acc += (eta0 - pi_n) * np.outer(d, d.conj())
        if chi is not None:
            # trace the chains out of the stuck branch
            chain_idx = _chain_indices(space)
            c = chi.amplitudes
            for g in np.unique(chain_idx[~vac]):
                rows = np.flatnonzero(~vac & (chain_idx == g))
                w = np.zeros(mem_dim, dtype=complex)
                w[mem_idx[rows]] = c[rows]
                acc += (1.0 - eta0) * np.outer(w, w.conj())
        sigma = DensityOperator(acc / (1.0 - pi_n), mem_space)

    sdata = None
    if mem_dim <= _DENSE_CAP:
        chain_dim = 4**model.sites
        coeff = np.zeros((mem_dim, chain_dim), dtype=complex)
        coeff[mem_idx, _chain_indices(space)] = final
        s, lv, rv = schmidt_split(coeff.reshape(-1), (mem_dim, chain_dim), (0,))
        keep = s > 1e-14
        sdata = SchmidtData(
            coefficients=s[keep],
            left_vectors=lv[:, keep],
            right_vectors=rv[:, keep],
            left_factors=tuple(range(n + m)),
            right_factors=tuple(range(n + m, n + m + 2 * model.sites)),
            left_space=mem_space,
            right_space=HilbertFactorization((2,) * (2 * model.sites)),
        )

    iso = reconstruction_isometries(model, schedule, max_dim=max_dim) if isometries else None

    return ProtocolRun(
        model=model,
        schedule=schedule,
        space=space,
        input_psi=logical,
        final_state=StateVector(final, (space.dim,)),
        eta0=eta0,
        pi_n=pi_n,
        p_list=p_list,
        vacuum_mask=vac,
        yes_mask=yes,
        phi_component=phi,
        delta_component=delta,
        chi_component=chi,
        sigma_no=sigma,
        schmidt=sdata,
        isometries=iso,
    )


def success_probabilities(model: LinkModel, schedule: Schedule, psi=None, *,
                          max_dim: int | None = None):
    """Round-by-round success probabilities without the full decomposition.

    Returns ``(p_list, overall)`` where ``overall`` is the product, which
    equals the weight of the all-blocks-good pattern in the final state.
    Defaults to the all-zeros logical input.
    """
    n = schedule.rounds
    logical = _coerce_logical(psi, n) if psi is not None else StateVector.basis((2,) * n, 0)
    space, steps = _transfer_setup(model, schedule, max_dim)
    vac = _vacuum_mask(space)
    p_list = _success_trajectory(
        space, steps, schedule, embed_alice(space, logical.amplitudes), vac
    )
    return p_list, float(np.prod(p_list))


# --------------------------------------------------- measurement and decoding


def parity_measurement(run_result: ProtocolRun, rng=None):
    """Sample the blockwise one-excitation check on the final state.

    Returns ``(outcome, probability, post_state)`` with outcome ``"yes"``
    or ``"no"``, the probability of that outcome, and the renormalized
    post-measurement state in the sector basis.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    final = run_result.final_state.amplitudes
    if rng.random() < run_result.pi_n:
        post = np.where(run_result.yes_mask, final, 0.0)
        outcome, prob = "yes", run_result.pi_n
    else:
        post = np.where(run_result.yes_mask, 0.0, final)
        outcome, prob = "no", 1.0 - run_result.pi_n
    return outcome, prob, StateVector.from_unnormalized(post, (run_result.space.dim,))


def recover_yes(run_result: ProtocolRun):
    """Decode the success branch back to the logical qubits.

    In each receiver block the level of the single excitation is the qubit
    and its position is junk to be traced out.  Returns the decoded density
    matrix and its fidelity with the transmitted state.
    """
    if run_result.pi_n < 1e-12:
        raise NumericalInvariantError("success branch carries no weight to decode")
    schedule = run_result.schedule
    space = run_result.space
    n = schedule.rounds
    final = run_result.final_state.amplitudes
    bob = space.configs[:, space.n_alice : space.n_memories]
    junk_dim = int(np.prod(schedule.bob_memories))
    table = np.zeros((2**n, junk_dim), dtype=complex)
    for row in np.flatnonzero(run_result.yes_mask):
        cells = bob[row]
        logical = junk = 0
        off = 0
        for m_k in schedule.bob_memories:
            block = cells[off : off + m_k]
            (j,) = np.flatnonzero(block != 2)
            logical = logical * 2 + int(block[j])
            junk = junk * m_k + int(j)
            off += m_k
        table[logical, junk] = final[row]
    table /= math.sqrt(run_result.pi_n)
    rho = DensityOperator(table @ table.conj().T, (2,) * n)
    return rho, fidelity(run_result.input_psi, rho)


# ------------------------------------------------------- input independence


@dataclass(frozen=True)
class InputIndependenceReport:
    """Branch weights across a panel of logical inputs."""

    eta_values: tuple[float, ...]
    pi_values: tuple[float, ...]
    p_table: tuple[tuple[float, ...], ...]

    @property
    def eta_spread(self) -> float:
        return max(self.eta_values) - min(self.eta_values)

    @property
    def pi_spread(self) -> float:
        return max(self.pi_values) - min(self.pi_values)

    @property
    def p_spread(self) -> float:
        per_round = zip(*self.p_table)
        return max(max(col) - min(col) for col in per_round)


def verify_input_independence(model: LinkModel, schedule: Schedule, *, panel=None,
                              seed: int = 20260821,
                              max_dim: int | None = None) -> InputIndependenceReport:
    """Measure how much the branch weights depend on the transmitted state.

    The default panel is every logical basis state, the uniform
    superposition, and two seeded random states.  Equal rail couplings
    should give spreads at numerical noise; detuned rails should not.
    """
    n = schedule.rounds
    logical_space = (2,) * n
    if panel is None:
        states = [StateVector.basis(logical_space, i) for i in range(2**n)]
        states.append(
            StateVector(np.full(2**n, 2 ** (-n / 2.0), dtype=complex), logical_space)
        )
        rng = np.random.default_rng(seed)
        states.extend(random_state_vector(logical_space, rng) for _ in range(2))
    else:
        states = [_coerce_logical(p, n) for p in panel]

    space, steps = _transfer_setup(model, schedule, max_dim)
    vac = _vacuum_mask(space)
    yes = _good_block_mask(space, schedule, n)
    etas, pis, rows = [], [], []
    for state in states:
        v0 = embed_alice(space, state.amplitudes)
        final = apply_steps(steps, v0)
        etas.append(float(np.sum(np.abs(final[vac]) ** 2)))
        pis.append(float(np.sum(np.abs(final[yes]) ** 2)))
        rows.append(_success_trajectory(space, steps, schedule, v0, vac))
    return InputIndependenceReport(tuple(etas), tuple(pis), tuple(rows))


# ------------------------------------------------------ unitary extensions


@dataclass(frozen=True, eq=False)
class ReconstructionIsometries:
    """Unitaries on the memory register extending the branch maps.

    ``success_unitary`` sends (logical state on the sender cells, empty
    receiver cells) to that input's success component; ``failure_unitary``
    does the same for the vacuum-failure component when those components
    are themselves orthonormal, and is None otherwise.
    """

    space: HilbertFactorization
    domain_columns: np.ndarray
    success_columns: np.ndarray
    failure_columns: np.ndarray | None
    success_unitary: np.ndarray
    failure_unitary: np.ndarray | None


def _complete_unitary(cols: np.ndarray, dim: int) -> np.ndarray:
    """Extend orthonormal columns to a unitary, keeping them verbatim."""
    basis = np.zeros((dim, dim), dtype=complex)
    k = cols.shape[1]
    basis[:, :k] = cols
    for j in range(dim):
        if k == dim:
            break
        cand = np.zeros(dim, dtype=complex)
        cand[j] = 1.0
        for _ in range(2):
            cand -= basis[:, :k] @ (basis[:, :k].conj().T @ cand)
        nrm = float(np.linalg.norm(cand))
        if nrm > 1e-7:
            basis[:, k] = cand / nrm
            k += 1
    if k != dim:
        raise NumericalInvariantError("unitary completion did not fill the space")
    return basis


def _domain_columns(n: int, m: int) -> np.ndarray:
    """Logical basis states on the sender cells, receiver cells empty."""
    mem_dim = 3 ** (n + m)
    cols = np.zeros((mem_dim, 2**n), dtype=complex)
    empty_b = 3**m - 1  # every receiver cell at level 2
    for i in range(2**n):
        a_idx = 0
        for q in range(n):
            a_idx = a_idx * 3 + ((i >> (n - 1 - q)) & 1)
        cols[a_idx * 3**m + empty_b, i] = 1.0
    return cols


def reconstruction_isometries(model: LinkModel, schedule: Schedule, *,
                              atol: float = 1e-8,
                              max_dim: int | None = None) -> ReconstructionIsometries:
    """Build unitaries mapping logical inputs to their outcome components.

    Runs the protocol on every logical basis state.  The success
    components of distinct basis states are orthonormal whenever the rails
    are uncoupled from each other, which is checked; the failure extension
    is attempted and dropped when its components are degenerate.
    """
    n, m = schedule.rounds, schedule.total_memories
    mem_dim = 3 ** (n + m)
    if mem_dim > _MATRIX_CAP:
        raise ValueError(
            f"memory register dimension {mem_dim} too large for a dense "
            f"unitary completion (cap {_MATRIX_CAP})"
        )
    runs = [
        run(model, schedule, StateVector.basis((2,) * n, i), max_dim=max_dim)
        for i in range(2**n)
    ]
    if any(r.phi_component is None for r in runs):
        raise NumericalInvariantError("a logical basis state has no success branch")
    success = np.column_stack([r.phi_component.amplitudes for r in runs])
    gram = success.conj().T @ success
    if float(np.abs(gram - np.eye(2**n)).max()) > atol:
        raise NumericalInvariantError("success components are not orthonormal")
    domain = _domain_columns(n, m)
    dom_basis = _complete_unitary(domain, mem_dim)
    success_unitary = _complete_unitary(success, mem_dim) @ dom_basis.conj().T

    failure = failure_unitary = None
    if all(r.delta_component is not None for r in runs):
        cand = np.column_stack([r.delta_component.amplitudes for r in runs])
        gram = cand.conj().T @ cand
        if float(np.abs(gram - np.eye(2**n)).max()) <= atol:
            failure = cand
            failure_unitary = _complete_unitary(cand, mem_dim) @ dom_basis.conj().T

    return ReconstructionIsometries(
        space=HilbertFactorization((3,) * (n + m)),
        domain_columns=domain,
        success_columns=success,
        failure_columns=failure,
        success_unitary=success_unitary,
        failure_unitary=failure_unitary,
    )


# ------------------------------------------------------------ failure branch


@dataclass(frozen=True)
class NoBranchReport:
    """How much the failure branch disturbs or reveals the logical input.

    ``residual`` measures whether the branch acts as a single fixed
    isometry on the logical space: deviation of the summed Gram of the
    conditioned failure Kraus family from the logical identity.  Zero
    means failure erases nothing and treats every input alike.

    ``traced_residual`` is the stricter per-chain-outcome Gram deviation:
    how much reading out the chain configuration would reveal about the
    input.  For rail-encoded inputs a stuck excitation sits on the chain
    matching its logical value, so this is large whenever failure has
    weight; it is reported as a diagnostic, not certified against atol.
    """

    residual: float
    traced_residual: float
    no_probabilities: tuple[float, ...]
    mediator_outcomes: int
    atol: float

    @property
    def passed(self) -> bool:
        return self.residual <= self.atol


def _no_branch_operators(model, schedule, max_dim):
    """Failure-branch Kraus blocks keyed by chain configuration, unnormalized."""
    n, m = schedule.rounds, schedule.total_memories
    mem_dim = 3 ** (n + m)
    if mem_dim > _DENSE_CAP:
        raise ValueError(f"memory register dimension {mem_dim} too large")
    space, steps = _transfer_setup(model, schedule, max_dim)
    yes = _good_block_mask(space, schedule, n)
    stack = np.column_stack(
        [embed_alice(space, np.eye(2**n)[i]) for i in range(2**n)]
    )
    out = apply_steps(steps, stack)
    fail_probs = 1.0 - np.sum(np.abs(out[yes]) ** 2, axis=0)
    out = np.where(yes[:, None], 0.0, out)
    mem_idx = _memory_indices(space)
    chain_idx = _chain_indices(space)
    blocks: dict[int, np.ndarray] = {}
    for row in np.flatnonzero(np.abs(out).max(axis=1) > 1e-15):
        block = blocks.setdefault(
            int(chain_idx[row]), np.zeros((mem_dim, 2**n), dtype=complex)
        )
        block[mem_idx[row]] = out[row]
    ordered = [blocks[key] for key in sorted(blocks)]
    return ordered, fail_probs, space


def no_branch_channel(model: LinkModel, schedule: Schedule, *,
                      max_dim: int | None = None) -> KrausChannel:
    """The failure branch as a channel from the logical space to the memories.

    Conditioning divides out the panel-mean failure probability, so the
    result is trace preserving exactly when the failure probability is
    input independent; :meth:`KrausChannel.completeness_residual` reports
    any deviation.
    """
    blocks, fail_probs, _ = _no_branch_operators(model, schedule, max_dim)
    mean_fail = float(np.mean(fail_probs))
    if mean_fail < 1e-12:
        raise NumericalInvariantError("failure branch carries no weight")
    n, m = schedule.rounds, schedule.total_memories
    ops = [b / math.sqrt(mean_fail) for b in blocks]
    return KrausChannel(
        ops,
        HilbertFactorization((2,) * n),
        HilbertFactorization((3,) * (n + m)),
    )


def verify_no_branch(model: LinkModel, schedule: Schedule, *, atol: float = 1e-8,
                     max_dim: int | None = None) -> NoBranchReport:
    """Check that failure neither erases nor skews the logical input.

    The certified condition is that the conditioned failure branch is a
    single fixed isometry on the logical space: the summed Gram of its
    Kraus family equals the identity.  Equal chains make every history
    amplitude independent of which rail carried the excitation, so the
    balanced model passes at machine precision and detuned chains fail.
    A protocol that never fails passes vacuously.

    The stricter per-chain-outcome condition, that each individual cross
    product of Kraus operators is itself a multiple of the identity, is
    reported as ``traced_residual``.  It cannot hold here whenever failure
    has weight: a stuck excitation occupies the chain matching its rail,
    so discarding the chains reveals the logical value.  Recovering the
    branch therefore needs either joint access to the chains or encoding
    into a zero-error subspace.
    """
    blocks, fail_probs, _ = _no_branch_operators(model, schedule, max_dim)
    mean_fail = float(np.mean(fail_probs))
    dim_l = 2**schedule.rounds
    eye = np.eye(dim_l)
    if mean_fail < 1e-12:
        return NoBranchReport(
            residual=0.0,
            traced_residual=0.0,
            no_probabilities=tuple(float(p) for p in fail_probs),
            mediator_outcomes=len(blocks),
            atol=atol,
        )
    conditioned = [b / math.sqrt(mean_fail) for b in blocks]
    gram_sum = sum(b.conj().T @ b for b in conditioned)
    residual = float(np.abs(gram_sum - eye).max())
    traced = 0.0
    for a in range(len(conditioned)):
        for b in range(a, len(conditioned)):
            cross = conditioned[a].conj().T @ conditioned[b]
            scale = np.trace(cross) / dim_l
            traced = max(traced, float(np.abs(cross - scale * eye).max()))
    return NoBranchReport(
        residual=residual,
        traced_residual=traced,
        no_probabilities=tuple(float(p) for p in fail_probs),
        mediator_outcomes=len(blocks),
        atol=atol,
    )


# --------------------------------------------------------------- resources


@dataclass(frozen=True)
class RateReport:
    """Qubit bookkeeping for patching failures with auxiliary resources."""

    mode: str
    qubits: int
    success_probability: float
    failure_probability: float
    mediator_dim: int | None
    ebits_per_qubit: float | None = None
    cbits_per_qubit: float | None = None
    qubit_overheads: tuple[float, ...] | None = None
    rate_sequence: tuple[float, ...] | None = None
    first_round_rate: float | None = None
    asymptotic_rate: float | None = None


def resource_accounting(n: int, success, mediator_dim: int | None = None,
                        mode: str = "teleport", *,
                        retry_rounds: int = 8) -> RateReport:
    """Account for the extra qubits needed to cover protocol failures.

    ``success`` is either the overall success probability or the per-round
    sequence (whose product is used).  ``teleport`` mode prices patching
    the failure branch with entanglement: the failure weight times the
    qutrit cost in ebits, twice that in classical bits, per logical qubit.
    ``retry`` mode re-sends failed batches recursively: each level re-encodes
    the previous level's qubits plus a mediator description, and the rate
    after R levels divides ``n`` by the expected total qubit count.
    """
    probs = np.atleast_1d(np.asarray(success, dtype=float))
    if probs.size == 0 or np.any((probs < 0.0) | (probs > 1.0)):
        raise ValueError("success probabilities must lie in [0, 1]")
    total = float(probs[0]) if probs.size == 1 else float(np.prod(probs))
    eps = 1.0 - total
    if mode == "teleport":
        ebits = eps * _LOG2_3
        return RateReport(
            mode=mode,
            qubits=int(n),
            success_probability=total,
            failure_probability=eps,
            mediator_dim=mediator_dim,
            ebits_per_qubit=ebits,
            cbits_per_qubit=2.0 * ebits,
        )
    if mode != "retry":
        raise ValueError(f"unknown accounting mode: {mode!r}")
    if probs.size > 1 and float(np.ptp(probs)) > 1e-9:
        raise ValueError("retry accounting needs a uniform success probability")
    if mediator_dim is None or int(mediator_dim) < 2:
        raise ValueError("retry accounting needs the mediator dimension")
    if eps * _LOG2_3 >= 1.0:
        raise ValueError(
            "retry overhead diverges: failure probability times log2(3) is >= 1"
        )
    d2 = int(mediator_dim) ** 2
    head = math.log2(d2 * (d2 + 1))
    counts = [float(n)]
    for _ in range(retry_rounds):
        counts.append(counts[-1] * _LOG2_3 + head)
    rates = []
    spent = 0.0
    for level, count in enumerate(counts):
        spent += count * eps**level
        rates.append(n / spent)
    return RateReport(
        mode=mode,
        qubits=int(n),
        success_probability=total,
        failure_probability=eps,
        mediator_dim=int(mediator_dim),
        qubit_overheads=tuple(counts),
        rate_sequence=tuple(rates),
        first_round_rate=rates[1] if len(rates) > 1 else None,
        asymptotic_rate=1.0 - eps * _LOG2_3,
    )
