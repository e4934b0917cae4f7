"""Dual-rail transmission: runs, decomposition, decoding, failure analysis."""

import json
import math

import numpy as np
import pytest

from qlink.codes import greedy_classical_code, verify_classical
from qlink.errors import NumericalInvariantError
from qlink.link import LinkModel, Schedule
from qlink.protocol import (
    no_branch_channel,
    parity_measurement,
    reconstruction_isometries,
    recover_yes,
    resource_accounting,
    run,
    success_probabilities,
    verify_input_independence,
    verify_no_branch,
)
from qlink.tensor import StateVector, fidelity

LOG2_3 = math.log2(3.0)


# ---------------------------------------------------------------- oracles


def catch_probability(j, tau):
    """Two-site chain, one receiver attempt: the entry amplitude swaps out."""
    return math.sin(j * tau) ** 2


def memory_register_index(config, n_cells):
    """Ternary flat index of the memory cells, first cell slowest."""
    idx = 0
    for v in config[:n_cells]:
        idx = 3 * idx + int(v)
    return idx


# ------------------------------------------------------------ transmission


def test_perfect_transfer_round():
    psi = [0.6, 0.8j]
    r = run(LinkModel(2), Schedule((1,), np.pi / 2), psi)
    assert r.pi_n == pytest.approx(1.0, abs=1e-9)
    assert r.eta0 == pytest.approx(1.0, abs=1e-9)
    assert r.p_list == pytest.approx((1.0,), abs=1e-9)
    assert r.chi_component is None
    assert r.delta_component is None
    rho, fid = recover_yes(r)
    assert fid >= 1.0 - 1e-9
    want = np.outer(psi, np.conj(psi))
    assert np.abs(rho.matrix - want).max() < 1e-9


def test_single_site_link_never_fails():
    r = run(LinkModel(1), Schedule((1, 1), 1.3), [0.5, 0.5, 0.5, 0.5])
    assert r.pi_n == pytest.approx(1.0, abs=1e-12)
    assert r.p_list == pytest.approx((1.0, 1.0), abs=1e-12)
    assert r.chi_component is None
    _, fid = recover_yes(r)
    assert fid >= 1.0 - 1e-9


def test_partial_transfer_matches_two_level_oracle():
    for j, tau in [(1.0, np.pi / 4), (1.0, np.pi / 3), (0.8, 0.9)]:
        r = run(LinkModel(2, j), Schedule((1,), tau), [1, 0])
        assert r.pi_n == pytest.approx(catch_probability(j, tau), abs=1e-9)
    r = run(LinkModel(2), Schedule((1,), np.pi / 3), [0, 1])
    assert r.pi_n == pytest.approx(0.75, abs=1e-9)


def test_round_probabilities_multiply_to_total():
    model = LinkModel(2)
    schedule = Schedule((2, 3), 0.9)
    psi = np.full(4, 0.5)
    r = run(model, schedule, psi)
    assert float(np.prod(r.p_list)) == pytest.approx(r.pi_n, abs=1e-10)
    p_list, total = success_probabilities(model, schedule, psi)
    assert p_list == pytest.approx(r.p_list, abs=1e-12)
    assert total == pytest.approx(r.pi_n, abs=1e-10)


def test_no_success_weight_zero_fills_later_rounds():
    r = run(LinkModel(2), Schedule((1, 1), np.pi), [1, 0, 0, 0])
    assert r.p_list[0] < 1e-12
    assert r.p_list[1] == 0.0
    assert r.phi_component is None
    with pytest.raises(NumericalInvariantError):
        recover_yes(r)


def test_success_pattern_forces_everything_else_empty():
    # conservation: n delivered excitations leave no room elsewhere
    r = run(LinkModel(2), Schedule((1, 2), 0.7), [0.5, 0.5, 0.5, 0.5])
    space = r.space
    n = space.n_alice
    for row in np.flatnonzero(r.yes_mask):
        cfg = space.configs[row]
        assert np.all(cfg[:n] == 2)
        assert np.all(cfg[space.n_memories:] == 0)
    assert np.all(r.vacuum_mask[r.yes_mask])


def test_components_reconstruct_the_final_state():
    r = run(LinkModel(2), Schedule((1, 1), 0.9), [0.6, 0, 0, 0.8j])
    space = r.space
    n_cells = space.n_memories
    rebuilt = np.zeros(space.dim, dtype=complex)
    phi = r.phi_component.amplitudes
    delta = r.delta_component.amplitudes
    for row in np.flatnonzero(r.vacuum_mask):
        idx = memory_register_index(space.configs[row], n_cells)
        weight = math.sqrt(r.pi_n) if r.yes_mask[row] else math.sqrt(r.eta0 - r.pi_n)
        source = phi if r.yes_mask[row] else delta
        rebuilt[row] = weight * source[idx]
    rebuilt += math.sqrt(1.0 - r.eta0) * r.chi_component.amplitudes
    assert np.abs(rebuilt - r.final_state.amplitudes).max() < 1e-10


def test_component_orthogonalities():
    model = LinkModel(2)
    schedule = Schedule((1, 1), 0.9)
    r = run(model, schedule, [1, 0, 0, 0])
    other = run(model, schedule, [0, 0, 0, 1])
    # the stuck branch never has empty chains
    assert np.abs(r.chi_component.amplitudes[r.vacuum_mask]).max() == 0.0
    n, m = schedule.rounds, schedule.total_memories
    delta = r.delta_component.amplitudes.reshape(3**n, 3**m)
    for phi_run in (r, other):
        phi = phi_run.phi_component.amplitudes.reshape(3**n, 3**m)
        assert np.abs(delta @ phi.conj().T).max() < 1e-10


def test_mediator_spectrum_top_weight_is_vacuum_branch():
    r = run(LinkModel(2), Schedule((1,), np.pi / 3), [1 / np.sqrt(2), 1j / np.sqrt(2)])
    lam = r.schmidt.coefficients ** 2
    assert float(lam.sum()) == pytest.approx(1.0, abs=1e-9)
    assert float(lam[0]) == pytest.approx(r.eta0, abs=1e-9)
    top_chain = r.schmidt.right_vectors[:, 0]
    assert abs(top_chain[0]) == pytest.approx(1.0, abs=1e-9)


def test_sigma_no_is_a_density_matrix():
    r = run(LinkModel(2), Schedule((1, 1), np.pi / 4), [1, 0, 0, 0])
    s = r.sigma_no.matrix
    assert np.trace(s).real == pytest.approx(1.0, abs=1e-10)
    assert np.abs(s - s.conj().T).max() < 1e-12
    assert np.linalg.eigvalsh(s).min() > -1e-12


def test_summary_is_json_serializable():
    r = run(LinkModel(2), Schedule((1, 1), 0.9), [0.5, 0.5, 0.5, 0.5])
    text = json.dumps(r.summary())
    data = json.loads(text)
    assert data["rounds"] == 2
    assert data["sector_dim"] == r.space.dim
    weights = data["weights"]
    total = weights["success"] + weights["vacuum_failure"] + weights["mediator_failure"]
    assert total == pytest.approx(1.0, abs=1e-10)


def test_run_input_validation():
    with pytest.raises(ValueError):
        run(LinkModel(2), Schedule((1,), 0.5), [1, 0, 0])
    with pytest.raises(ValueError):
        run(LinkModel(2), Schedule((1,), 0.5), [1, 0], max_dim=2)


def test_success_rate_nondecreasing_in_receiver_count():
    totals = []
    for m in (1, 2, 4, 8):
        _, total = success_probabilities(LinkModel(2), Schedule((m,), 0.9))
        totals.append(total)
    assert all(b >= a - 1e-12 for a, b in zip(totals, totals[1:]))
    assert totals[-1] > totals[0]


# ------------------------------------------------------- measurement, decoding


def test_parity_measurement_probabilities_and_post_states():
    r = run(LinkModel(2), Schedule((1,), np.pi / 4), [1, 0])
    rng = np.random.default_rng(11)
    hits = 0
    draws = 2000
    for _ in range(draws):
        outcome, prob, post = parity_measurement(r, rng)
        amps = post.amplitudes
        if outcome == "yes":
            hits += 1
            assert prob == pytest.approx(r.pi_n, abs=1e-10)
            assert np.abs(amps[~r.yes_mask]).max() == 0.0
        else:
            assert prob == pytest.approx(1.0 - r.pi_n, abs=1e-10)
            assert np.abs(amps[r.yes_mask]).max() == 0.0
    sigma = math.sqrt(0.25 / draws)
    assert abs(hits / draws - 0.5) < 3 * sigma


def test_recover_yes_traces_out_cell_positions():
    # two receiver cells: the catch round is junk, the level is the payload
    psi = [0.6, 0.8]
    r = run(LinkModel(2), Schedule((2,), 1.1), psi)
    rho, fid = recover_yes(r)
    assert fid >= 1.0 - 1e-9
    assert np.abs(rho.matrix - np.outer(psi, psi)).max() < 1e-9


def test_rail_exchange_symmetry():
    model = LinkModel(2)
    schedule = Schedule((1, 1), 0.8)
    flipped = [0, 0, 0, 1]
    a = run(model, schedule, [1, 0, 0, 0])
    b = run(model, schedule, flipped)
    assert abs(a.pi_n - b.pi_n) < 1e-12
    assert abs(a.eta0 - b.eta0) < 1e-12
    assert np.max(np.abs(np.subtract(a.p_list, b.p_list))) < 1e-12


# ------------------------------------------------------- input independence


def test_input_independence_symmetric_link():
    rep = verify_input_independence(LinkModel(2), Schedule((1,), 0.9))
    assert rep.eta_spread < 1e-12
    assert rep.pi_spread < 1e-12
    assert rep.p_spread < 1e-12
    rep2 = verify_input_independence(LinkModel(2), Schedule((1, 2), 0.7))
    assert rep2.eta_spread < 1e-10
    assert rep2.pi_spread < 1e-10
    assert rep2.p_spread < 1e-10


def test_input_independence_breaks_with_detuned_rails():
    rep = verify_input_independence(LinkModel(2, (1.0, 0.7)), Schedule((1,), 0.9))
    assert rep.pi_spread > 1e-3
    assert rep.eta_spread > 1e-3


def test_input_independence_accepts_explicit_panel():
    panel = [[1, 0], [0, 1], [1 / np.sqrt(2), 1 / np.sqrt(2)]]
    rep = verify_input_independence(LinkModel(2), Schedule((1,), np.pi / 4), panel=panel)
    assert len(rep.pi_values) == 3
    assert rep.pi_values[0] == pytest.approx(0.5, abs=1e-9)
    assert rep.pi_spread < 1e-12


# ------------------------------------------------------- unitary extensions


def test_reconstruction_isometries_are_unitary():
    iso = reconstruction_isometries(LinkModel(2), Schedule((1, 1), 0.9))
    dim = iso.success_unitary.shape[0]
    for u in (iso.success_unitary, iso.failure_unitary):
        assert u is not None
        assert np.abs(u.conj().T @ u - np.eye(dim)).max() < 1e-10
    assert np.abs(iso.success_unitary @ iso.domain_columns - iso.success_columns).max() < 1e-9
    assert np.abs(iso.failure_unitary @ iso.domain_columns - iso.failure_columns).max() < 1e-9


def test_success_unitary_extends_by_linearity():
    # the same unitary must map a superposition's domain vector to its branch
    model = LinkModel(2)
    schedule = Schedule((1,), 0.7)
    iso = reconstruction_isometries(model, schedule)
    psi = np.array([0.6, 0.8j])
    r = run(model, schedule, psi)
    domain_vec = iso.domain_columns @ psi
    assert np.abs(iso.success_unitary @ domain_vec - r.phi_component.amplitudes).max() < 1e-9


def test_run_can_attach_isometries():
    r = run(LinkModel(2), Schedule((1,), 0.7), [1, 0], isometries=True)
    assert r.isometries is not None
    assert r.isometries.failure_columns is None  # one round never parks in a sender cell


# ----------------------------------------------------------- failure branch


def test_failure_branch_is_fixed_isometry_for_equal_rails():
    model = LinkModel(2)
    tau = np.pi / 4
    for schedule in (Schedule((1,), tau), Schedule((1, 1), tau), Schedule((2, 2), tau)):
        rep = verify_no_branch(model, schedule)
        assert rep.passed
        assert rep.residual < 1e-8
        assert max(rep.no_probabilities) - min(rep.no_probabilities) < 1e-12


def test_failure_branch_readout_reveals_the_rail():
    # chains are rail-tagged, so tracing them cannot stay input-blind
    rep = verify_no_branch(LinkModel(2), Schedule((1,), np.pi / 4))
    assert rep.traced_residual > 0.2
    assert rep.mediator_outcomes == 2


def test_failure_branch_skews_with_detuned_rails():
    model = LinkModel(2, (1.0, 0.7))
    for schedule in (Schedule((1,), np.pi / 4), Schedule((1, 1), np.pi / 4)):
        rep = verify_no_branch(model, schedule)
        assert not rep.passed
        assert rep.residual > 1e-3


def test_failure_branch_vacuous_when_transfer_is_certain():
    rep = verify_no_branch(LinkModel(1), Schedule((1,), 0.9))
    assert rep.residual == 0.0
    assert rep.traced_residual == 0.0
    assert rep.mediator_outcomes == 0
    assert max(rep.no_probabilities) < 1e-12
    with pytest.raises(NumericalInvariantError):
        no_branch_channel(LinkModel(1), Schedule((1,), 0.9))


def test_no_branch_channel_is_trace_preserving_for_equal_rails():
    ch = no_branch_channel(LinkModel(2), Schedule((1, 1), np.pi / 4))
    assert ch.completeness_residual() < 1e-10
    assert ch.input_space.factors == (2, 2)
    assert ch.output_space.factors == (3, 3, 3, 3)


def test_stuck_branch_admits_no_nontrivial_zero_error_code():
    # any two words can stick simultaneously and collide, so greedy stops at one
    ch = no_branch_channel(LinkModel(2), Schedule((1, 1), np.pi / 4))
    code = greedy_classical_code(ch)
    assert code.size == 1
    assert verify_classical(code, ch).passed


# ---------------------------------------------------------------- resources


def test_teleport_accounting_prices_the_failure_weight():
    rep = resource_accounting(4, 0.9, mode="teleport")
    assert rep.failure_probability == pytest.approx(0.1, abs=1e-12)
    assert rep.ebits_per_qubit == pytest.approx(0.1 * LOG2_3, abs=1e-12)
    assert rep.cbits_per_qubit == pytest.approx(0.2 * LOG2_3, abs=1e-12)
    certain = resource_accounting(4, 1.0, mode="teleport")
    assert certain.ebits_per_qubit == 0.0
    assert certain.cbits_per_qubit == 0.0


def test_retry_accounting_matches_independent_arithmetic():
    n, eps, d = 1, 0.1, 3
    rep = resource_accounting(n, 1.0 - eps, d, "retry")
    assert rep.asymptotic_rate == pytest.approx(1.0 - eps * LOG2_3, abs=1e-12)
    n1 = n * LOG2_3 + math.log2(d**2 * (d**2 + 1))
    assert rep.qubit_overheads[1] == pytest.approx(n1, abs=1e-12)
    assert rep.first_round_rate == pytest.approx(n / (n + n1 * eps), abs=1e-12)
    assert rep.rate_sequence[0] == pytest.approx(1.0, abs=1e-12)
    spent = sum(c * eps**k for k, c in enumerate(rep.qubit_overheads))
    assert rep.rate_sequence[-1] == pytest.approx(n / spent, abs=1e-12)


def test_retry_accounting_accepts_uniform_round_sequence():
    rep = resource_accounting(2, [0.9, 0.9, 0.9], 3, "retry")
    assert rep.success_probability == pytest.approx(0.9**3, abs=1e-12)


def test_resource_accounting_rejects_bad_inputs():
    with pytest.raises(ValueError):
        resource_accounting(1, 1.2)
    with pytest.raises(ValueError):
        resource_accounting(1, 0.9, 3, "barter")
    with pytest.raises(ValueError):
        resource_accounting(1, [0.9, 0.5], 3, "retry")
    with pytest.raises(ValueError):
        resource_accounting(1, 0.9, None, "retry")
    with pytest.raises(ValueError):
        # failure weight times log2(3) at or above one never amortizes
        resource_accounting(1, 0.2, 3, "retry")


def test_fidelity_of_decoded_state_against_run_input():
    psi = StateVector(np.array([0.48, 0.6, 0.4, 0.5], dtype=complex) /
                      np.linalg.norm([0.48, 0.6, 0.4, 0.5]), (2, 2))
    r = run(LinkModel(2), Schedule((1, 1), np.pi / 2), psi)
    rho, fid = recover_yes(r)
    assert fid == pytest.approx(fidelity(psi, rho), abs=1e-12)
    assert fid >= 1.0 - 1e-9
