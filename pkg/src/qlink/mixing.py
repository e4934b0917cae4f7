"""Spectral analysis of the receiver's repeated coupling to the mediator.

Every receiver step is the same operation: let the chains evolve for tau,
swap the exit sites into a fresh memory cell, discard the cell.  Iterating
that map on the mediator decides whether the link relaxes, how fast, and
toward which state.  The analysis runs sector by sector; the default arena
is the span of the chain vacuum and the single-excitation states (dimension
1 + 2*sites), which is invariant because the step never adds excitations.

Mediator basis order: vacuum first, then the single-excitation configs in
:func:`qlink.link.chain_basis` order.  Superoperators use column-stacking
vectorization, matching the Choi convention of :mod:`qlink.channels`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channels import KrausChannel, choi_distance, compose
from .errors import NonMixingError, NumericalInvariantError
from .link import (
    LinkModel,
    Schedule,
    alice_gate,
    bob_gate,
    chain_basis,
    free_evolution,
    induced_channel,
    sector_space,
    steps_to_matrix,
)
from .random import random_density_matrix
from .tensor import DensityOperator, HilbertFactorization, trace_distance

__all__ = [
    "Superoperator",
    "SpectralReport",
    "ConvergenceReport",
    "mediator_dimension",
    "ground_state",
    "receiver_map",
    "to_superoperator",
    "to_spectrum",
    "fixed_point_purity",
    "require_mixing",
    "iterate_convergence",
    "effective_memoryless",
    "effective_channel_distance",
]

PERIPHERAL_TOL = 1e-10


def mediator_dimension(sites: int) -> int:
    """Vacuum plus one excitation anywhere on either chain."""
    return 1 + 2 * sites


def ground_state(sites: int) -> DensityOperator:
    dim = mediator_dimension(sites)
    mat = np.zeros((dim, dim), dtype=complex)
    mat[0, 0] = 1.0
    return DensityOperator(mat, HilbertFactorization((dim,)))


def receiver_map(model: LinkModel, tau: float, *, bob_active: bool = True) -> KrausChannel:
    """One receiver step as a channel on the mediator sector.

    Free evolution for ``tau``, then the swap into a fresh empty memory
    cell, then the trace over that cell.  With ``bob_active=False`` the swap
    is skipped and the map is plain unitary conjugation, which is the
    natural negative control because nothing ever leaves the chains.
    """
    space = sector_space(0, 1, model.sites, (0, 1))
    steps = [("free", free_evolution(space, model, tau))]
    if bob_active:
        steps.append(("perm", bob_gate(space, 0)))
    u = steps_to_matrix(steps, space.dim)
    cell = space.configs[:, 0]
    med_rows = np.flatnonzero(cell == 2)  # memory empty, mediator basis order
    dim = med_rows.size
    med_pos = {space.configs[r, 1:].tobytes(): j for j, r in enumerate(med_rows)}
    ops = []
    for level in (0, 1, 2):
        rows = np.flatnonzero(cell == level)
        k = np.zeros((dim, dim), dtype=complex)
        for r in rows:
            k[med_pos[space.configs[r, 1:].tobytes()]] = u[r, med_rows]
        if np.abs(k).max() > 1e-15:
            ops.append(k)
    factors = HilbertFactorization((dim,))
    return KrausChannel(ops, factors, factors)


@dataclass(eq=False)
class Superoperator:
    """Matrix acting on column-stacked density operators."""

    matrix: np.ndarray
    source: KrausChannel


def to_superoperator(ch: KrausChannel) -> Superoperator:
    if ch.input_dim != ch.output_dim:
        raise ValueError("spectral analysis needs a square channel")
    mat = sum(np.kron(k.conj(), k) for k in ch.operators)
    return Superoperator(matrix=mat, source=ch)


def _devec(v: np.ndarray) -> np.ndarray:
    d = round(np.sqrt(v.size))
    return v.reshape(d, d).T  # undo column stacking


@dataclass(eq=False)
class SpectralReport:
    """Eigenstructure of an iterated channel."""

    eigenvalues: np.ndarray  # sorted by modulus, descending
    fixed_points: list  # DensityOperator per normalizable eigenvalue-1 operator
    gap: float
    fixed_point_purity: float | None
    is_mixing: bool
    unit_multiplicity: int
    peripheral_count: int

    @property
    def information_draining(self) -> bool:
        """Pure fixed point: every retained excitation is eventually handed over."""
        return self.fixed_point_purity is not None and self.fixed_point_purity >= 1 - 1e-9

    def to_json_dict(self) -> dict:
        return {
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
            "gap": float(self.gap),
            "fixed_point_purity": None
            if self.fixed_point_purity is None
            else float(self.fixed_point_purity),
            "is_mixing": bool(self.is_mixing),
            "unit_multiplicity": int(self.unit_multiplicity),
            "peripheral_count": int(self.peripheral_count),
        }


def to_spectrum(sup: Superoperator | KrausChannel) -> SpectralReport:
    """Eigenvalues by modulus, fixed points, gap, and the mixing certificate.

    Mixing means a one-dimensional eigenvalue-1 space and no other
    eigenvalue of modulus within ``1e-10`` of one.
    """
    if isinstance(sup, KrausChannel):
        sup = to_superoperator(sup)
    vals, vecs = np.linalg.eig(sup.matrix)
    order = np.lexsort((np.angle(vals), -np.abs(vals)))
    vals = vals[order]
    vecs = vecs[:, order]
    moduli = np.abs(vals)
    if moduli.max() > 1 + 1e-10:
        raise NumericalInvariantError(
            f"spectral radius {moduli.max():.12f} exceeds 1 for a trace-preserving map"
        )
    unit = np.flatnonzero(np.abs(vals - 1.0) <= PERIPHERAL_TOL)
    if unit.size == 0:
        raise NumericalInvariantError("no eigenvalue 1: the map is not trace preserving")
    peripheral = int((moduli > 1 - PERIPHERAL_TOL).sum())
    gap = 1.0 - (moduli[1] if moduli.size > 1 else 0.0)
    fixed_points = []
    space = HilbertFactorization((sup.source.input_dim,))
    for i in unit:
        rho = _devec(vecs[:, i])
        rho = (rho + rho.conj().T) / 2
        tr = np.trace(rho).real
        if abs(tr) < 1e-8:
            continue  # traceless eigenoperator, not a state
        rho = rho / tr
        if np.linalg.eigvalsh(rho).min() < -1e-8:
            continue  # indefinite combination out of a degenerate fixed space
        fixed_points.append(DensityOperator(_clip_psd(rho), space))
    is_mixing = unit.size == 1 and peripheral == 1
    purity = fixed_points[0].purity() if len(fixed_points) == 1 else None
    return SpectralReport(
        eigenvalues=vals,
        fixed_points=fixed_points,
        gap=float(gap),
        fixed_point_purity=purity,
        is_mixing=bool(is_mixing),
        unit_multiplicity=int(unit.size),
        peripheral_count=peripheral,
    )


def _clip_psd(rho: np.ndarray) -> np.ndarray:
    evals, evecs = np.linalg.eigh(rho)
    evals = np.clip(evals, 0.0, None)
    evals = evals / evals.sum()
    return (evecs * evals) @ evecs.conj().T


def fixed_point_purity(report: SpectralReport) -> float:
    if len(report.fixed_points) != 1:
        raise NonMixingError(
            f"purity needs a unique fixed point, found {len(report.fixed_points)}"
        )
    return float(report.fixed_point_purity)


def require_mixing(sup: Superoperator | KrausChannel | SpectralReport) -> SpectralReport:
    report = sup if isinstance(sup, SpectralReport) else to_spectrum(sup)
    if not report.is_mixing:
        raise NonMixingError(
            f"map is not mixing: {report.unit_multiplicity} fixed directions, "
            f"{report.peripheral_count} peripheral eigenvalues, gap {report.gap:.3e}"
        )
    return report


@dataclass(eq=False)
class ConvergenceReport:
    distances: list
    ratios: list
    decay_ratio: float | None
    lambda2_modulus: float
    floor: float


def iterate_convergence(
    ch: KrausChannel,
    omega0: DensityOperator | None = None,
    steps: int = 40,
    *,
    seed: int = 20260821,
    floor: float = 1e-13,
) -> ConvergenceReport:
    """Trace distances of iterates from the fixed point, plus the decay rate.

    The decay ratio is the geometric mean of the last up-to-10 step ratios
    that sit above the numerical floor; for a mixing map it settles at the
    modulus of the second eigenvalue, though near-degenerate subleading
    eigenvalues can leave beat patterns that hold it off by more than the
    asymptotic estimate suggests.  Distances must never grow: the data
    processing inequality makes any increase a numerical fault.
    """
    report = require_mixing(ch)
    target = report.fixed_points[0]
    lam2 = float(np.abs(report.eigenvalues[1])) if report.eigenvalues.size > 1 else 0.0
    if omega0 is None:
        rng = np.random.default_rng(seed)
        omega0 = random_density_matrix((ch.input_dim,), rng)
    state = omega0
    distances = []
    for _ in range(steps):
        state = ch.apply(state)
        distances.append(trace_distance(state, target))
    for a, b in zip(distances, distances[1:]):
        if b > a + 1e-12:
            raise NumericalInvariantError(
                f"distance to the fixed point increased from {a:.3e} to {b:.3e}"
            )
    ratios = [
        b / a for a, b in zip(distances, distances[1:]) if a > floor and b > floor
    ]
    tail = ratios[-10:]
    decay = float(np.exp(np.mean(np.log(tail)))) if len(tail) >= 2 else None
    return ConvergenceReport(
        distances=distances,
        ratios=ratios,
        decay_ratio=decay,
        lambda2_modulus=lam2,
        floor=floor,
    )


def effective_memoryless(model: LinkModel, tau: float) -> KrausChannel:
    """Single-use sender map against the relaxed mediator.

    The sender's swap acts on ``rho (x) omega*`` with the mediator in the
    fixed point of the receiver map, and the mediator is traced out.  Input
    is the logical qubit, output the sender's memory cell, so the n-use
    sender-side link channel can be compared against the n-fold parallel
    power of this map.
    """
    report = require_mixing(receiver_map(model, tau))
    omega = report.fixed_points[0].matrix
    space = sector_space(1, 0, model.sites, (1, 2))
    gate = alice_gate(space, 0)
    med_configs = [(0,) * (2 * model.sites)] + chain_basis(model.sites, 1)
    evals, evecs = np.linalg.eigh(omega)
    ops: dict = {}
    for mu in range(evals.size):
        p = evals[mu]
        if p < 1e-14:
            continue
        phi = evecs[:, mu]
        for a_in in (0, 1):
            vec = np.zeros(space.dim, dtype=complex)
            for amp, cfg in zip(phi, med_configs):
                if abs(amp) > 1e-16:
                    vec[space.locate((a_in,) + cfg)] = amp
            out = vec[gate]  # the swap gate is an involution, lookup applies it
            for i in np.flatnonzero(np.abs(out) > 1e-16):
                a_out = int(space.configs[i, 0])
                key = (mu, space.configs[i, 1:].tobytes())
                if key not in ops:
                    ops[key] = np.zeros((3, 2), dtype=complex)
                ops[key][a_out, a_in] += np.sqrt(p) * out[i]
    operators = [ops[k] for k in sorted(ops)]
    return KrausChannel(
        operators, HilbertFactorization((2,)), HilbertFactorization((3,))
    )


def effective_channel_distance(
    model: LinkModel,
    schedule: Schedule,
    *,
    bob_active: bool = True,
) -> float:
    """Choi distance of the n-use sender-side channel from the memoryless power.

    Shrinks as the per-round receiver couplings grow, because each round
    then hands the next one a mediator close to the fixed point.
    """
    actual = induced_channel(model, schedule, keep="alice", bob_active=bob_active)
    single = effective_memoryless(model, schedule.tau)
    power = single
    for _ in range(schedule.rounds - 1):
        power = compose(power, single, mode="parallel")
    return choi_distance(actual, power)
