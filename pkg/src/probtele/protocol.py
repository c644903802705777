"""Probabilistic teleportation of ``alpha|x> + beta|x-bar>`` over ``a|00> + b|11>``.

Register layout for an ``n``-qubit input (``n + 2`` qubits in all)::

    qubit 0          Alice's first data qubit (Hadamard target)
    qubits 1..n-1    the rest of the data register, carrying e' after encoding
    qubit n          Alice's half of the channel
    qubit n+1        Bob's half of the channel

Bob's filter uses one further ancilla in a separate two-qubit register.
"""
from __future__ import annotations

import cmath
import enum
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np

from .gates import Orientation, check_channel_amplitudes, filter_for, standard_gate
from .statevector import (
    MAX_QUBITS,
    Bits,
    PureState,
    RandomStream,
    apply_gate,
    branch_probabilities,
    fidelity,
    measure,
    project,
    tensor,
)

NORM_TOL = 1e-12


class ProtocolError(RuntimeError):
    pass


class BranchClass(enum.Enum):
    """Shape of Bob's amplitudes after Alice's pair measurement."""

    N_FORM = "N"  # proportional to (alpha a, beta b)
    M_FORM = "M"  # proportional to (alpha b, beta a), after correction


class BranchPolicy(enum.Enum):
    N_ONLY = "n-only"
    ALL_BRANCHES = "all"


@dataclass(frozen=True)
class UnknownStateSpec:
    n: int
    x: str
    alpha: complex
    beta: complex

    def __post_init__(self) -> None:
        object.__setattr__(self, "alpha", complex(self.alpha))
        object.__setattr__(self, "beta", complex(self.beta))
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if self.n > MAX_QUBITS - 3:
            raise ValueError(f"n = {self.n} exceeds the register limit of {MAX_QUBITS - 3}")
        if len(self.x) != self.n or set(self.x) - {"0", "1"}:
            raise ValueError(f"x must be a binary string of length {self.n}, got {self.x!r}")
        if not (cmath.isfinite(self.alpha) and cmath.isfinite(self.beta)):
            raise ValueError("alpha and beta must be finite")
        norm = abs(self.alpha) ** 2 + abs(self.beta) ** 2
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"|alpha|^2 + |beta|^2 = {norm!r}, expected 1")

    @property
    def x_bar(self) -> str:
        return complement(self.x)

    @property
    def is_canonical(self) -> bool:
        return self.x[0] == "0"


@dataclass(frozen=True)
class ChannelSpec:
    a: float
    b: float

    def __post_init__(self) -> None:
        check_channel_amplitudes(self.a, self.b)


@dataclass(frozen=True)
class ClassicalMessage:
    eprime_bits: Bits
    alice_pair_bits: Bits  # (data qubit, Alice's channel half)


class FilterResult(NamedTuple):
    success: bool
    filter_prob: float
    state: PureState  # |bob, ancilla> after the ancilla measurement


@dataclass
class TrialOutcome:
    success: bool
    pair_bits: Bits
    branch: BranchClass
    correction_applied: str
    branch_probability: float
    filter_probability: float
    recovered_fidelity: Optional[float] = None
    trace: Optional[list[tuple[str, PureState]]] = field(default=None, repr=False)


# Correction U2 for each (data, channel-half) outcome in canonical labeling.
# Applied before the filter so the filter always sees the un-flipped form.
CORRECTION_TABLE: dict[Bits, str] = {
    (0, 0): "I",
    (0, 1): "X",
    (1, 0): "Z",
    (1, 1): "iY",
}


def complement(bits: str) -> str:
    return bits.translate(str.maketrans("01", "10"))


def amplitude_ordering_note(spec: UnknownStateSpec) -> Optional[str]:
    """Message when ``|alpha| < |beta|`` does not hold; the protocol works regardless."""
    if abs(spec.alpha) < abs(spec.beta):
        return None
    return (
        f"|alpha| = {abs(spec.alpha):.6g} is not below |beta| = {abs(spec.beta):.6g}; "
        "this ordering is not needed for correctness and is not enforced"
    )


def target_state(spec: UnknownStateSpec) -> PureState:
    amps = np.zeros(2**spec.n, dtype=complex)
    amps[int(spec.x, 2)] += spec.alpha
    amps[int(spec.x_bar, 2)] += spec.beta
    return PureState(amps)


def channel_state(channel: ChannelSpec) -> PureState:
    return PureState(np.array([channel.a, 0, 0, channel.b], dtype=complex))


def canonicalize(spec: UnknownStateSpec) -> UnknownStateSpec:
    """Relabel so that ``x[0] == '0'``; the represented vector is unchanged."""
    if spec.is_canonical:
        return spec
    return replace(spec, x=spec.x_bar, alpha=spec.beta, beta=spec.alpha)


def prepare_joint_state(spec: UnknownStateSpec, channel: ChannelSpec) -> PureState:
    return tensor(target_state(spec), channel_state(channel))


def alice_cnot_cascade(state: PureState, n: int) -> PureState:
    cnot = standard_gate("CNOT")
    for t in range(1, n + 1):
        state = apply_gate(state, cnot, [0, t])
    return state


def alice_hadamard(state: PureState) -> PureState:
    return apply_gate(state, standard_gate("H"), [0])


def expected_eprime(spec: UnknownStateSpec) -> Bits:
    x1 = int(spec.x[0])
    return tuple(x1 ^ int(c) for c in spec.x[1:])


def alice_encode(spec: UnknownStateSpec, channel: ChannelSpec, trace: Optional[list] = None) -> PureState:
    """Deterministic part of Alice's side: joint state, CNOT cascade, Hadamard."""
    psi = prepare_joint_state(spec, channel)
    _record(trace, "psi1: joint state", psi)
    psi = alice_cnot_cascade(psi, spec.n)
    _record(trace, "psi2: after Alice's CNOT cascade", psi)
    psi = alice_hadamard(psi)
    _record(trace, "psi3: after Hadamard on qubit 0", psi)
    return psi


def run_alice(
    spec: UnknownStateSpec,
    channel: ChannelSpec,
    rng: RandomStream,
    trace: Optional[list] = None,
    encoded: Optional[PureState] = None,
) -> tuple[ClassicalMessage, PureState, float]:
    """Alice's full side with sampled measurements.

    Returns the classical message, the collapsed register and the exact
    probability of the sampled branch.
    """
    if not spec.is_canonical:
        raise ProtocolError("run_alice expects a canonical spec")
    n = spec.n
    psi = encoded if encoded is not None else alice_encode(spec, channel, trace)
    eprime: Bits = ()
    p_e = 1.0
    if n > 1:
        eprime, p_e, psi = measure(psi, range(1, n), rng)
    _record(trace, "psi4: after e' measurement", psi)
    pair, p_pair, psi = measure(psi, [0, n], rng)
    _record(trace, "alice_measured: after Alice's pair measurement", psi)
    return ClassicalMessage(eprime, pair), psi, p_e * p_pair


def classify_branch(pair_bits: Bits) -> BranchClass:
    # With x[0] == 0, Bob's qubit pairs amplitude a with |0> exactly when
    # Alice's channel half reads 0.
    return BranchClass.N_FORM if pair_bits[1] == 0 else BranchClass.M_FORM


def bob_select_correction(bits: Bits, branch: BranchClass) -> str:
    bits = tuple(int(b) for b in bits)
    if classify_branch(bits) is not branch:
        raise ValueError(f"outcome {bits} does not belong to branch {branch.name}")
    return CORRECTION_TABLE[bits]


def local_qubit(state: PureState, qubit: int) -> PureState:
    """Single-qubit state of ``qubit`` when every other qubit is in a basis state."""
    n = state.num_qubits
    psi = np.moveaxis(state.amplitudes.reshape((2,) * n), qubit, -1).reshape(-1, 2)
    rows = np.flatnonzero(np.any(psi != 0, axis=1))
    if len(rows) != 1:
        raise ProtocolError(f"qubit {qubit} is entangled with the rest of the register")
    return PureState(psi[rows[0]])


def _filter_orientation(branch: BranchClass) -> Orientation:
    return Orientation.SCALE_ZERO if branch is BranchClass.N_FORM else Orientation.SCALE_ONE


def filter_applies(branch: BranchClass, policy: BranchPolicy) -> bool:
    return branch is BranchClass.N_FORM or policy is BranchPolicy.ALL_BRANCHES


def apply_filter(bob_state: PureState, channel: ChannelSpec, branch: BranchClass) -> PureState:
    """Adjoin an ancilla in ``|0>`` and apply the branch's filter unitary."""
    gate = filter_for(channel.a, channel.b, _filter_orientation(branch))
    return apply_gate(tensor(bob_state, PureState.basis("0")), gate, [0, 1])


def bob_filter(
    bob_state: PureState,
    channel: ChannelSpec,
    branch: BranchClass,
    policy: BranchPolicy,
    rng: RandomStream,
    trace: Optional[list] = None,
) -> FilterResult:
    """Heralded filtering: success iff the ancilla reads 0.

    ``filter_prob`` is the exact conditional probability of success. Under
    ``N_ONLY`` an M-form branch fails without touching the ancilla.
    """
    if not filter_applies(branch, policy):
        return FilterResult(False, 0.0, tensor(bob_state, PureState.basis("0")))
    filtered = apply_filter(bob_state, channel, branch)
    _record(trace, "psi5: Bob's qubit and ancilla after the filter", filtered)
    p_success = branch_probabilities(filtered, [1]).get((0,), 0.0)
    (anc,), _, collapsed = measure(filtered, [1], rng)
    return FilterResult(anc == 0, p_success, collapsed)


def bob_reconstruct(result: FilterResult, message: ClassicalMessage, n: int) -> PureState:
    """Rebuild the ``n``-qubit input from Bob's qubit and the e' bits."""
    if not result.success:
        raise ProtocolError("cannot reconstruct after a failed filter")
    if len(message.eprime_bits) != n - 1:
        raise ValueError(f"expected {n - 1} e' bits, got {len(message.eprime_bits)}")
    psi = local_qubit(result.state, 0)
    if n > 1:
        psi = tensor(psi, PureState.basis(message.eprime_bits))
        cnot = standard_gate("CNOT")
        for t in range(1, n):
            psi = apply_gate(psi, cnot, [0, t])
    return psi


def run_trial(
    spec: UnknownStateSpec,
    channel: ChannelSpec,
    policy: BranchPolicy,
    rng: RandomStream,
    trace: bool = False,
    *,
    encoded: Optional[PureState] = None,
    reference: Optional[PureState] = None,
) -> TrialOutcome:
    """One sampled run of the whole protocol.

    ``encoded`` (the post-Hadamard register of the canonical spec) and
    ``reference`` may be passed in to skip recomputing them across trials.
    """
    steps: Optional[list] = [] if trace else None
    canon = canonicalize(spec)
    if encoded is None or trace:
        encoded = alice_encode(canon, channel, steps)
    message, psi, p_branch = run_alice(canon, channel, rng, steps, encoded=encoded)
    n = canon.n
    pair = message.alice_pair_bits
    branch = classify_branch(pair)
    correction = bob_select_correction(pair, branch)
    bob = apply_gate(local_qubit(psi, n + 1), standard_gate(correction), [0])
    _record(steps, f"bob_corrected: Bob's qubit after {correction}", bob)
    result = bob_filter(bob, channel, branch, policy, rng, steps)
    _record(steps, "psi6: Bob's qubit and ancilla after the ancilla measurement", result.state)
    outcome = TrialOutcome(
        success=result.success,
        pair_bits=pair,
        branch=branch,
        correction_applied=correction,
        branch_probability=p_branch,
        filter_probability=result.filter_prob,
        trace=steps,
    )
    if result.success:
        if steps is not None and n > 1:
            bob_q = local_qubit(result.state, 0)
            _record(steps, "psi7: Bob's qubit with e' prepared", tensor(bob_q, PureState.basis(message.eprime_bits)))
        recovered = bob_reconstruct(result, message, n)
        _record(steps, "psi8: reconstructed state", recovered)
        ref = reference if reference is not None else target_state(spec)
        outcome.recovered_fidelity = fidelity(recovered, ref)
    return outcome


def _record(trace: Optional[list], label: str, state: PureState) -> None:
    if trace is not None:
        trace.append((label, state))


def branch_states(spec: UnknownStateSpec, channel: ChannelSpec) -> dict[Bits, tuple[float, ClassicalMessage, PureState]]:
    """Every Alice outcome with its exact probability, message and collapsed register.

    Same code path as :func:`run_alice` with sampling replaced by projection.
    """
    canon = canonicalize(spec)
    n = canon.n
    psi = alice_encode(canon, channel)
    out = {}
    e_targets = list(range(1, n))
    e_outcomes = branch_probabilities(psi, e_targets) if n > 1 else {(): 1.0}
    if len(e_outcomes) != 1:
        raise ProtocolError("e' register is not separable after encoding")
    for e_bits in e_outcomes:
        p_e, psi_e = project(psi, e_targets, e_bits) if n > 1 else (1.0, psi)
        for pair, _ in branch_probabilities(psi_e, [0, n]).items():
            p_pair, psi_pair = project(psi_e, [0, n], pair)
            out[pair] = (p_e * p_pair, ClassicalMessage(e_bits, pair), psi_pair)
    return out
