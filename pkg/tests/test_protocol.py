import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from probtele.gates import standard_gate
from probtele.protocol import (
    CORRECTION_TABLE,
    BranchClass,
    BranchPolicy,
    ChannelSpec,
    ClassicalMessage,
    FilterResult,
    ProtocolError,
    UnknownStateSpec,
    alice_cnot_cascade,
    alice_encode,
    alice_hadamard,
    amplitude_ordering_note,
    apply_filter,
    bob_filter,
    bob_reconstruct,
    bob_select_correction,
    branch_states,
    canonicalize,
    classify_branch,
    expected_eprime,
    local_qubit,
    prepare_joint_state,
    run_alice,
    run_trial,
    target_state,
)
from probtele.statevector import PureState, RandomStream, apply_gate, branch_probabilities, fidelity, project
from oracles import (
    all_bitstrings,
    cascade_formula,
    hadamard_formula,
    joint_state_formula,
    ket,
    random_amplitudes,
    random_channel,
)

R2 = 1 / math.sqrt(2)
ALL, NONLY = BranchPolicy.ALL_BRANCHES, BranchPolicy.N_ONLY
PAPER_SPEC = UnknownStateSpec(3, "000", 0.6, 0.8)
PAPER_CHANNEL = ChannelSpec(0.8, 0.6)


def random_spec(rng, n):
    x = "".join(rng.choice(["0", "1"], size=n))
    return UnknownStateSpec(n, x, *random_amplitudes(rng))


# -- types -------------------------------------------------------------------

@pytest.mark.parametrize(
    "args",
    [(0, "", 1, 0), (2, "0", 1, 0), (2, "02", 1, 0), (1, "0", 0.6, 0.6), (22, "0" * 22, 1, 0)],
)
def test_invalid_state_specs(args):
    with pytest.raises(ValueError):
        UnknownStateSpec(*args)


def test_channel_spec_rejects_b_above_a():
    with pytest.raises(ValueError, match="b <= a"):
        ChannelSpec(0.6, 0.8)


def test_amplitude_ordering_note():
    assert amplitude_ordering_note(UnknownStateSpec(1, "0", 0.6, 0.8)) is None
    assert "not enforced" in amplitude_ordering_note(UnknownStateSpec(1, "0", 0.8, 0.6))


# -- canonicalize ------------------------------------------------------------

def test_canonical_spec_unchanged():
    assert canonicalize(PAPER_SPEC) is PAPER_SPEC


def test_canonicalize_complements_and_swaps():
    c = canonicalize(UnknownStateSpec(3, "111", 0.6, 0.8))
    assert (c.x, c.alpha, c.beta) == ("000", 0.8, 0.6)


@pytest.mark.parametrize("x", all_bitstrings(2) + all_bitstrings(3))
def test_canonicalize_preserves_state_vector(rng, x):
    spec = UnknownStateSpec(len(x), x, *random_amplitudes(rng))
    canon = canonicalize(spec)
    assert canon.x[0] == "0"
    np.testing.assert_array_equal(target_state(spec).amplitudes, target_state(canon).amplitudes)
    np.testing.assert_array_equal(
        prepare_joint_state(spec, PAPER_CHANNEL).amplitudes,
        prepare_joint_state(canon, PAPER_CHANNEL).amplitudes,
    )


# -- Alice -------------------------------------------------------------------

def test_prepare_basis_data():
    psi = prepare_joint_state(UnknownStateSpec(1, "0", 1, 0), PAPER_CHANNEL)
    np.testing.assert_allclose(psi.amplitudes, ket([("000", 0.8), ("011", 0.6)], 3))


def test_prepare_three_qubit_example():
    psi = prepare_joint_state(PAPER_SPEC, PAPER_CHANNEL)
    expected = ket([("00000", 0.48), ("00011", 0.36), ("11100", 0.64), ("11111", 0.48)], 5)
    np.testing.assert_allclose(psi.amplitudes, expected, atol=1e-15)
    assert psi.norm_squared() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("x", all_bitstrings(3) + ["0110", "1"])
def test_prepare_matches_formula(rng, x):
    spec = UnknownStateSpec(len(x), x, *random_amplitudes(rng))
    a, b = random_channel(rng)
    got = prepare_joint_state(spec, ChannelSpec(a, b)).amplitudes
    np.testing.assert_allclose(got, joint_state_formula(x, spec.alpha, spec.beta, a, b), atol=1e-15)


def test_cascade_single_qubit():
    al, be, a, b = 0.6, 0.8, 0.8, 0.6
    psi = alice_cnot_cascade(prepare_joint_state(UnknownStateSpec(1, "0", al, be), ChannelSpec(a, b)), 1)
    expected = ket([("000", al * a), ("011", al * b), ("110", be * a), ("101", be * b)], 3)
    np.testing.assert_allclose(psi.amplitudes, expected, atol=1e-15)


def test_cascade_basis_input():
    psi = alice_cnot_cascade(PureState.basis("1100"), 2)
    np.testing.assert_array_equal(psi.amplitudes, PureState.basis("1010").amplitudes)


@pytest.mark.parametrize("x", all_bitstrings(3))
def test_cascade_matches_xor_identities(rng, x):
    spec = UnknownStateSpec(3, x, *random_amplitudes(rng))
    a, b = random_channel(rng)
    got = alice_cnot_cascade(prepare_joint_state(spec, ChannelSpec(a, b)), 3).amplitudes
    want = cascade_formula(x, spec.alpha, spec.beta, a, b)
    np.testing.assert_allclose(got, want, atol=1e-15)
    assert np.count_nonzero(got) == 4


@pytest.mark.parametrize("x", all_bitstrings(3) + ["0101", "1"])
def test_hadamard_matches_eight_term_form(rng, x):
    spec = UnknownStateSpec(len(x), x, *random_amplitudes(rng))
    a, b = random_channel(rng)
    got = alice_encode(spec, ChannelSpec(a, b)).amplitudes
    np.testing.assert_allclose(got, hadamard_formula(x, spec.alpha, spec.beta, a, b), atol=1e-15)


@pytest.mark.parametrize("x,eprime", [("000", (0, 0)), ("011", (1, 1)), ("010", (1, 0))])
def test_eprime_separable(x, eprime):
    spec = UnknownStateSpec(3, x, 0.6, 0.8)
    psi = alice_hadamard(alice_cnot_cascade(prepare_joint_state(spec, PAPER_CHANNEL), 3))
    assert branch_probabilities(psi, [1, 2]) == {eprime: pytest.approx(1.0, abs=1e-12)}
    assert expected_eprime(spec) == eprime


def test_eight_term_state_probabilities():
    # (N^2/2, N^2/2, M^2/2, M^2/2) with N^2 = 0.4608, M^2 = 0.5392
    psi = alice_encode(PAPER_SPEC, PAPER_CHANNEL)
    probs = branch_probabilities(psi, [0, 3])
    assert probs[(0, 0)] == pytest.approx(0.2304, abs=1e-12)
    assert probs[(1, 0)] == pytest.approx(0.2304, abs=1e-12)
    assert probs[(0, 1)] == pytest.approx(0.2696, abs=1e-12)
    assert probs[(1, 1)] == pytest.approx(0.2696, abs=1e-12)


def test_run_alice_probabilities_match_enumeration(rng):
    for n in (1, 2, 4):
        spec = canonicalize(random_spec(rng, n))
        a, b = random_channel(rng)
        ch = ChannelSpec(a, b)
        n2 = abs(spec.alpha) ** 2 * a * a + abs(spec.beta) ** 2 * b * b
        m2 = abs(spec.alpha) ** 2 * b * b + abs(spec.beta) ** 2 * a * a
        for i in range(20):
            msg, psi, p = run_alice(spec, ch, RandomStream(i).substream(n))
            want = n2 / 2 if msg.alice_pair_bits[1] == 0 else m2 / 2
            assert p == pytest.approx(want, abs=1e-12)
            assert msg.eprime_bits == expected_eprime(spec)
            assert len(msg.alice_pair_bits) == 2


def test_maximal_channel_branches_uniform():
    for pair, (p, _, _) in branch_states(PAPER_SPEC, ChannelSpec(R2, R2)).items():
        assert p == pytest.approx(0.25, abs=1e-12)


def test_run_alice_requires_canonical():
    with pytest.raises(ProtocolError):
        run_alice(UnknownStateSpec(2, "10", 0.6, 0.8), PAPER_CHANNEL, RandomStream(0))


# -- Bob ---------------------------------------------------------------------

def test_branch_classification():
    assert classify_branch((0, 0)) is BranchClass.N_FORM
    assert classify_branch((1, 0)) is BranchClass.N_FORM
    assert classify_branch((0, 1)) is BranchClass.M_FORM
    assert classify_branch((1, 1)) is BranchClass.M_FORM


def test_correction_for_matching_outcome_is_identity():
    assert bob_select_correction((0, 0), BranchClass.N_FORM) == "I"


def test_correction_table_is_bijection():
    assert sorted(CORRECTION_TABLE.values()) == sorted(["I", "X", "Z", "iY"])
    with pytest.raises(ValueError):
        bob_select_correction((0, 1), BranchClass.N_FORM)


def _corrected_bob(spec, channel, pair, gate):
    _, _, psi = branch_states(spec, channel)[pair]
    return apply_gate(local_qubit(psi, canonicalize(spec).n + 1), standard_gate(gate), [0])


def test_correction_oracle_unique(rng):
    for _ in range(20):
        spec = canonicalize(random_spec(rng, int(rng.integers(1, 5))))
        ch = ChannelSpec(*random_channel(rng, b_min=0.05))
        good = PureState(np.array([spec.alpha, spec.beta]))
        for pair in CORRECTION_TABLE:
            branch = classify_branch(pair)
            winners = []
            for gate in ("I", "X", "Z", "iY"):
                filtered = apply_filter(_corrected_bob(spec, ch, pair, gate), ch, branch)
                _, kept = project(filtered, [1], [0])
                if fidelity(local_qubit(kept, 0), good) >= 1 - 1e-10:
                    winners.append(gate)
            assert winners == [bob_select_correction(pair, branch)]


def test_bob_filter_nform_probability():
    bob = _corrected_bob(PAPER_SPEC, PAPER_CHANNEL, (0, 0), "I")
    res = bob_filter(bob, PAPER_CHANNEL, BranchClass.N_FORM, ALL, RandomStream(0))
    # b^2 / N^2 = 0.36 / 0.4608
    assert res.filter_prob == pytest.approx(0.78125, abs=1e-12)


def test_bob_filter_mform_under_n_only_fails():
    bob = _corrected_bob(PAPER_SPEC, PAPER_CHANNEL, (0, 1), "X")
    res = bob_filter(bob, PAPER_CHANNEL, BranchClass.M_FORM, NONLY, RandomStream(0))
    assert res.success is False and res.filter_prob == 0.0


def test_bob_filter_certain_at_maximal_entanglement(rng):
    ch = ChannelSpec(R2, R2)
    spec = canonicalize(random_spec(rng, 3))
    for pair, gate in CORRECTION_TABLE.items():
        res = bob_filter(_corrected_bob(spec, ch, pair, gate), ch, classify_branch(pair), ALL, RandomStream(1))
        assert res.success and res.filter_prob == pytest.approx(1.0, abs=1e-12)


def test_reconstruct_single_qubit():
    kept = PureState(np.array([0.6, 0, 0.8, 0], dtype=complex))
    out = bob_reconstruct(FilterResult(True, 1.0, kept), ClassicalMessage((), (0, 0)), 1)
    np.testing.assert_allclose(out.amplitudes, [0.6, 0.8])


@pytest.mark.parametrize("eprime,x", [((0, 0), "000"), ((1, 1), "011")])
def test_reconstruct_three_qubits(eprime, x):
    kept = PureState(np.array([0.6, 0, 0.8j, 0], dtype=complex))
    out = bob_reconstruct(FilterResult(True, 1.0, kept), ClassicalMessage(eprime, (0, 0)), 3)
    spec = UnknownStateSpec(3, x, 0.6, 0.8j)
    assert fidelity(out, target_state(spec)) == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(out.amplitudes, target_state(spec).amplitudes, atol=1e-15)


def test_reconstruct_requires_success():
    kept = PureState.basis("01")
    with pytest.raises(ProtocolError):
        bob_reconstruct(FilterResult(False, 0.3, kept), ClassicalMessage((), (0, 0)), 1)


def test_local_qubit_rejects_entangled():
    with pytest.raises(ProtocolError):
        local_qubit(PureState(np.array([R2, 0, 0, R2])), 0)


# -- whole trial -------------------------------------------------------------

def test_trial_maximal_channel_always_succeeds(rng):
    ch = ChannelSpec(R2, R2)
    for i in range(50):
        out = run_trial(random_spec(rng, 3), ch, ALL, RandomStream(i))
        assert out.success and out.recovered_fidelity >= 1 - 1e-10


def test_trial_tiny_b_rarely_succeeds():
    b = 1e-3
    ch = ChannelSpec(math.sqrt(1 - b * b), b)
    wins = sum(run_trial(PAPER_SPEC, ch, ALL, RandomStream(3).substream(i)).success for i in range(300))
    assert wins <= 2


def test_trial_trace_records_states():
    out = run_trial(UnknownStateSpec(3, "101", 0.6, 0.8), PAPER_CHANNEL, ALL, RandomStream(11), trace=True)
    labels = [label.split(":")[0] for label, _ in out.trace]
    assert labels[:4] == ["psi1", "psi2", "psi3", "psi4"]
    assert "psi6" in labels
    if out.success:
        assert labels[-1] == "psi8"
        assert fidelity(out.trace[-1][1], target_state(UnknownStateSpec(3, "101", 0.6, 0.8))) > 1 - 1e-10
    else:
        assert out.recovered_fidelity is None


def test_failed_trial_keeps_residual_in_trace():
    for i in range(200):
        out = run_trial(PAPER_SPEC, PAPER_CHANNEL, NONLY, RandomStream(2).substream(i), trace=True)
        if not out.success:
            assert out.recovered_fidelity is None
            assert out.trace[-1][0].startswith("psi6")
            return
    pytest.fail("no failed trial in 200")


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 2**63),
    n=st.integers(1, 6),
    policy=st.sampled_from(list(BranchPolicy)),
)
def test_successful_trials_have_unit_fidelity(seed, n, policy):
    rng = np.random.default_rng(seed)
    spec = random_spec(rng, n)
    ch = ChannelSpec(*random_channel(rng))
    for i in range(5):
        out = run_trial(spec, ch, policy, RandomStream(seed).substream(i))
        if out.success:
            assert out.recovered_fidelity >= 1 - 1e-10
        assert out.correction_applied == CORRECTION_TABLE[out.pair_bits]
