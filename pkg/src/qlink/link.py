"""Dual-rail link through a pair of exchange-coupled spin chains.

Geometry and conventions, fixed once here:

* Two chains of ``sites`` spins each carry the two rails.  Flat spin index
  ``chain * sites + x`` with ``x = 0`` on the sender side; basis configs are
  laid out as ``(alice memories, bob memories, spins)``.
* Memory cells are qutrits with levels ``0`` and ``1`` (one excitation in
  rail 0 or rail 1) and level ``2`` for empty.  A spin level is its
  excitation number, so the conserved total is
  ``#(memories != 2) + #(spins == 1)``.
* Basis states of a fixed-excitation sector are enumerated in lexicographic
  config order.
* Each bond contributes ``(J/2) (XX + YY + ZZ)``; in the excitation basis
  that is a hop of strength J plus a +-J/2 diagonal.
* The swap gates are the involutions
  ``|0><->|down down>  ~  |empty><->|up down>`` (rail 0) and the mirrored
  rule for rail 1, acting on a memory cell and the two rail end-sites; every
  other configuration is left alone.
* One transmission round is ``V_k S_{a_k}`` where Alice's swap comes first
  and ``V_k`` alternates free evolution for time tau with a swap into the
  next fresh receiver memory.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .channels import KrausChannel, MultiUseFamily
from .tensor import HilbertFactorization, herm_exp

__all__ = [
    "LinkModel",
    "Schedule",
    "SectorSpace",
    "FreeEvolution",
    "sector_space",
    "sector_dimension",
    "excitation_numbers",
    "chain_basis",
    "chain_hamiltonian",
    "chain_evolution",
    "alice_gate",
    "bob_gate",
    "free_evolution",
    "protocol_steps",
    "round_step_counts",
    "apply_steps",
    "steps_to_matrix",
    "embed_alice",
    "induced_channel",
    "link_family",
]


@dataclass(frozen=True, eq=False)
class LinkModel:
    """Chain geometry plus the exchange couplings of both rails."""

    sites: int
    couplings: np.ndarray  # shape (2, sites - 1)

    def __init__(self, sites: int, coupling=1.0):
        sites = int(sites)
        if sites < 1:
            raise ValueError("need at least one site per chain")
        bonds = sites - 1
        arr = np.asarray(coupling, dtype=float)
        if arr.ndim == 0:
            table = np.full((2, bonds), float(arr))
        elif arr.shape == (2,):
            table = np.tile(arr[:, None], (1, bonds))
        elif arr.shape == (2, bonds):
            table = arr.copy()
        else:
            raise ValueError(
                f"coupling must be a scalar, a pair, or shape (2, {bonds}); got {arr.shape}"
            )
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "couplings", table)

    @property
    def entry_sites(self) -> tuple[int, int]:
        """Flat spin indices the sender's gates touch (one per rail)."""
        return (0, self.sites)

    @property
    def exit_sites(self) -> tuple[int, int]:
        return (self.sites - 1, 2 * self.sites - 1)


@dataclass(frozen=True)
class Schedule:
    """Receiver memories spent per round and the dwell time between swaps."""

    bob_memories: tuple[int, ...]
    tau: float

    def __post_init__(self):
        mems = tuple(int(m) for m in self.bob_memories)
        if not mems:
            raise ValueError("schedule needs at least one round")
        if any(m < 1 for m in mems):
            raise ValueError("every round needs at least one receiver memory")
        object.__setattr__(self, "bob_memories", mems)
        object.__setattr__(self, "tau", float(self.tau))

    @property
    def rounds(self) -> int:
        return len(self.bob_memories)

    @property
    def total_memories(self) -> int:
        return sum(self.bob_memories)

    def prefix(self, k: int) -> "Schedule":
        if not 1 <= k <= self.rounds:
            raise ValueError(f"prefix length {k} out of range")
        return Schedule(self.bob_memories[:k], self.tau)


# ------------------------------------------------------------- sector basis


@dataclass(eq=False)
class SectorSpace:
    """Fixed-excitation basis over (alice memories, bob memories, spins)."""

    n_alice: int
    n_bob: int
    sites: int
    excitations: tuple[int, ...]
    configs: np.ndarray  # (dim, n_alice + n_bob + 2 * sites) int8
    index: dict  # row bytes -> basis position

    @property
    def dim(self) -> int:
        return self.configs.shape[0]

    @property
    def n_memories(self) -> int:
        return self.n_alice + self.n_bob

    def spin_col(self, chain: int, site: int) -> int:
        return self.n_memories + chain * self.sites + site

    def locate(self, config) -> int:
        key = np.asarray(config, dtype=np.int8).tobytes()
        try:
            return self.index[key]
        except KeyError:
            raise KeyError("configuration is not in this sector") from None


def sector_dimension(n_memories: int, sites: int, excitations) -> int:
    """Count configs by excitation number without enumerating them."""
    if np.isscalar(excitations):
        excitations = (int(excitations),)
    total = 0
    for target in excitations:
        for j in range(min(n_memories, target) + 1):
            total += math.comb(n_memories, j) * 2**j * math.comb(2 * sites, target - j)
    return total


def sector_space(
    n_alice: int,
    n_bob: int,
    sites: int,
    excitations,
    *,
    max_dim: int | None = None,
) -> SectorSpace:
    if np.isscalar(excitations):
        excitations = (int(excitations),)
    targets = tuple(sorted({int(e) for e in excitations}))
    if not targets or targets[0] < 0:
        raise ValueError("excitation numbers must be non-negative")
    n_mem = n_alice + n_bob
    n_spin = 2 * sites
    dim = sector_dimension(n_mem, sites, targets)
    if dim == 0:
        raise ValueError(f"no configurations carry {targets} excitations")
    if max_dim is not None and dim > max_dim:
        raise ValueError(f"sector dimension {dim} exceeds the budget of {max_dim}")
    tset = set(targets)
    tmax = targets[-1]
    length = n_mem + n_spin
    rows = np.empty((dim, length), dtype=np.int8)
    cfg = np.empty(length, dtype=np.int8)
    count = 0

    def fill(pos: int, exc: int) -> None:
        nonlocal count
        room = length - pos  # each remaining cell holds at most one excitation
        if not any(exc <= t <= exc + room for t in tset):
            return
        if pos == length:
            rows[count] = cfg
            count += 1
            return
        levels = ((0, 1), (1, 1), (2, 0)) if pos < n_mem else ((0, 0), (1, 1))
        for level, cost in levels:
            cfg[pos] = level
            fill(pos + 1, exc + cost)

    fill(0, 0)
    index = {rows[i].tobytes(): i for i in range(dim)}
    return SectorSpace(
        n_alice=n_alice,
        n_bob=n_bob,
        sites=sites,
        excitations=targets,
        configs=rows,
        index=index,
    )


def excitation_numbers(space: SectorSpace) -> np.ndarray:
    mem = space.configs[:, : space.n_memories]
    spins = space.configs[:, space.n_memories :]
    return (mem != 2).sum(axis=1) + spins.sum(axis=1)


# ------------------------------------------------------------- chain pieces


def chain_basis(sites: int, r: int) -> list[tuple[int, ...]]:
    """Spin configs of both chains with r excitations, lexicographic."""
    return [c for c in itertools.product((0, 1), repeat=2 * sites) if sum(c) == r]


def chain_hamiltonian(model: LinkModel, r: int) -> np.ndarray:
    """Exchange Hamiltonian of both rails restricted to r excitations."""
    basis = chain_basis(model.sites, r)
    idx = {c: i for i, c in enumerate(basis)}
    n = model.sites
    h = np.zeros((len(basis), len(basis)))
    for i, cfg in enumerate(basis):
        diag = 0.0
        for chain in range(2):
            for x in range(n - 1):
                j_val = model.couplings[chain, x]
                lo = chain * n + x
                a, b = cfg[lo], cfg[lo + 1]
                diag += (j_val / 2) * (1.0 if a == b else -1.0)
                if a != b:
                    other = list(cfg)
                    other[lo], other[lo + 1] = b, a
                    h[i, idx[tuple(other)]] += j_val
        h[i, i] = diag
    return h


def chain_evolution(model: LinkModel, r: int, tau: float) -> np.ndarray:
    return herm_exp(chain_hamiltonian(model, r).astype(complex), tau)


# ------------------------------------------------------------- sector ops


def _swap_permutation(space: SectorSpace, mem_col: int, rail_cols) -> np.ndarray:
    perm = np.arange(space.dim)
    for i in range(space.dim):
        row = space.configs[i]
        m = row[mem_col]
        u0, u1 = row[rail_cols[0]], row[rail_cols[1]]
        if m in (0, 1) and u0 == 0 and u1 == 0:
            target = row.copy()
            target[mem_col] = 2
            target[rail_cols[m]] = 1
        elif m == 2 and u0 + u1 == 1:
            rail = 0 if u0 == 1 else 1
            target = row.copy()
            target[mem_col] = rail
            target[rail_cols[rail]] = 0
        else:
            continue
        perm[i] = space.index[target.tobytes()]
    if not np.array_equal(perm[perm], np.arange(space.dim)):
        raise AssertionError("swap gate permutation is not an involution")
    return perm


def alice_gate(space: SectorSpace, k: int) -> np.ndarray:
    """Swap between sender memory k and the chain entry sites."""
    if not 0 <= k < space.n_alice:
        raise ValueError(f"no sender memory {k}")
    rails = tuple(space.n_memories + s for s in (0, space.sites))
    return _swap_permutation(space, k, rails)


def bob_gate(space: SectorSpace, j: int) -> np.ndarray:
    """Swap between receiver memory j and the chain exit sites."""
    if not 0 <= j < space.n_bob:
        raise ValueError(f"no receiver memory {j}")
    rails = tuple(space.n_memories + s for s in (space.sites - 1, 2 * space.sites - 1))
    return _swap_permutation(space, space.n_alice + j, rails)


@dataclass(eq=False)
class FreeEvolution:
    """Chain evolution lifted to the sector, grouped by memory config."""

    dim: int
    groups: list  # (row index array, excitation count r)
    blocks: dict  # r -> chain evolution matrix

    def apply(self, vec: np.ndarray) -> np.ndarray:
        v = np.asarray(vec, dtype=complex)
        out = np.empty_like(v)
        for rows, r in self.groups:
            out[rows] = self.blocks[r] @ v[rows]
        return out


def free_evolution(space: SectorSpace, model: LinkModel, tau: float) -> FreeEvolution:
    if model.sites != space.sites:
        raise ValueError("model and sector disagree on the chain length")
    n_mem = space.n_memories
    grouped: dict = {}
    for i in range(space.dim):
        row = space.configs[i]
        r = int(row[n_mem:].sum())
        grouped.setdefault((row[:n_mem].tobytes(), r), []).append(i)
    blocks = {
        r: chain_evolution(model, r, tau) for r in sorted({r for _, r in grouped})
    }
    # rows inside one group follow lexicographic spin order, which is exactly
    # the chain_basis order the blocks are written in
    groups = [(np.array(rows), r) for (_, r), rows in grouped.items()]
    return FreeEvolution(dim=space.dim, groups=groups, blocks=blocks)


def protocol_steps(
    space: SectorSpace, model: LinkModel, schedule: Schedule, *, bob_active: bool = True
) -> list:
    """The full transmission unitary as a list of permutation/evolution steps.

    ``bob_active=False`` keeps the timing of the schedule but drops the
    receiver swaps, which models an idle receiver for negative controls.
    """
    if schedule.rounds != space.n_alice:
        raise ValueError("schedule rounds must match the sender memory count")
    if schedule.total_memories != space.n_bob:
        raise ValueError("schedule memories must match the receiver memory count")
    evo = free_evolution(space, model, schedule.tau)
    steps = []
    offset = 0
    for k in range(schedule.rounds):
        steps.append(("perm", alice_gate(space, k)))
        for l in range(schedule.bob_memories[k]):
            steps.append(("free", evo))
            if bob_active:
                steps.append(("perm", bob_gate(space, offset + l)))
        offset += schedule.bob_memories[k]
    return steps


def round_step_counts(schedule: Schedule) -> list[int]:
    """Steps per round, for slicing the output of :func:`protocol_steps`."""
    return [1 + 2 * m for m in schedule.bob_memories]


def apply_steps(steps, vec: np.ndarray) -> np.ndarray:
    """Apply steps in order; works on a vector or a stack of columns."""
    v = np.asarray(vec, dtype=complex)
    for kind, op in steps:
        if kind == "perm":
            v = v[op]  # swap gates are involutions, so image = preimage lookup
        else:
            v = op.apply(v)
    return v


def steps_to_matrix(steps, dim: int) -> np.ndarray:
    return apply_steps(steps, np.eye(dim, dtype=complex))


def embed_alice(space: SectorSpace, logical: np.ndarray) -> np.ndarray:
    """Sector vector for sender memories loaded with a logical state.

    The logical basis is binary over the sender memories (memory 0 slowest),
    receiver memories empty and chains in vacuum.
    """
    n = space.n_alice
    logical = np.asarray(logical, dtype=complex).reshape(-1)
    if logical.size != 2**n:
        raise ValueError(f"logical amplitudes must have length {2 ** n}")
    vec = np.zeros(space.dim, dtype=complex)
    tail = [2] * space.n_bob + [0] * (2 * space.sites)
    for a_idx in range(2**n):
        bits = [(a_idx >> (n - 1 - q)) & 1 for q in range(n)]
        cfg = np.array(bits + tail, dtype=np.int8)
        vec[space.locate(cfg)] = logical[a_idx]
    return vec


# --------------------------------------------------------- induced channels


def induced_channel(
    model: LinkModel,
    schedule: Schedule,
    keep: str = "bob",
    *,
    bob_active: bool = True,
    max_dim: int | None = None,
) -> KrausChannel:
    """Channel from the sender's logical qubits to the kept memories.

    ``keep`` selects the output: the receiver memories (one factor per
    round), the sender's leftover memories, or both; everything else,
    chains included, is traced out.
    """
    if keep not in ("bob", "alice", "both"):
        raise ValueError("keep must be bob, alice, or both")
    n = schedule.rounds
    m = schedule.total_memories
    space = sector_space(n, m, model.sites, n, max_dim=max_dim)
    steps = protocol_steps(space, model, schedule, bob_active=bob_active)
    starts = np.zeros((space.dim, 2**n), dtype=complex)
    tail = [2] * m + [0] * (2 * model.sites)
    for a_idx in range(2**n):
        bits = [(a_idx >> (n - 1 - q)) & 1 for q in range(n)]
        starts[space.locate(bits + tail), a_idx] = 1.0
    finals = apply_steps(steps, starts)
    configs = space.configs
    a_part = configs[:, :n].astype(np.int64)
    b_part = configs[:, n : n + m].astype(np.int64)
    s_part = configs[:, n + m :]
    b_index = b_part @ (3 ** np.arange(m - 1, -1, -1))
    a_index = a_part @ (3 ** np.arange(n - 1, -1, -1))
    bob_factors = tuple(3**mk for mk in schedule.bob_memories)
    if keep == "bob":
        out_index = b_index
        out_space = HilbertFactorization(bob_factors)
        env_src = (a_part, s_part)
    elif keep == "alice":
        out_index = a_index
        out_space = HilbertFactorization((3,) * n)
        env_src = (b_part, s_part)
    else:
        out_index = a_index * 3**m + b_index
        out_space = HilbertFactorization((3,) * n + bob_factors)
        env_src = (s_part,)
    env_rows = np.concatenate([np.asarray(p, dtype=np.int8) for p in env_src], axis=1)
    dim_in = 2**n
    dim_out = out_space.total
    ops: dict = {}
    for i in range(space.dim):
        amps = finals[i]
        if not amps.any():
            continue
        key = env_rows[i].tobytes()
        if key not in ops:
            ops[key] = np.zeros((dim_out, dim_in), dtype=complex)
        ops[key][out_index[i]] += amps
    operators = [ops[k] for k in sorted(ops)]
    operators = [op for op in operators if np.abs(op).max() > 1e-15]
    return KrausChannel(operators, HilbertFactorization((2,) * n), out_space)


def link_family(
    model: LinkModel,
    schedule: Schedule,
    keep: str = "bob",
    *,
    max_dim: int | None = None,
) -> MultiUseFamily:
    """Multi-use view of the link: use k sends the k-th logical qubit."""

    def gen(k: int) -> KrausChannel:
        return induced_channel(model, schedule.prefix(k), keep=keep, max_dim=max_dim)

    if keep == "bob":
        traced = None  # default: the last output factor is use k's block
    elif keep == "alice":
        traced = lambda k: (k - 1,)
    else:  # sender qutrits come first, receiver blocks after them
        traced = lambda k: (k - 1, 2 * k - 1)
    fam = MultiUseFamily(
        generator=gen,
        carrier_dim=2,
        env_dims=lambda k: len(fam.channel(k).operators),
        traced_factors=traced,
    )
    return fam
