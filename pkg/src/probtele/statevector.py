"""Dense pure-state simulation of a small qubit register.

Qubit 0 is the most significant bit of the amplitude index, so the basis
label of index ``i`` reads left to right like a ket: in a 3-qubit register
index 3 is ``|011>``.
"""
from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

MAX_QUBITS = 24
NORM_TOL = 1e-12
UNITARY_TOL = 1e-12

Bits = tuple[int, ...]


class RegisterOverflowError(ValueError):
    """Raised when a register would exceed the configured qubit limit."""


class NonUnitaryGateError(ValueError):
    pass


def _is_power_of_two(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


@dataclass(frozen=True, eq=False)
class PureState:
    """Normalized amplitude vector over ``num_qubits`` qubits.

    Instances are treated as immutable; every operation returns a new state.
    """

    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1).copy()
        if not _is_power_of_two(amps.size):
            raise ValueError(f"amplitude count {amps.size} is not a power of two")
        if amps.size > 2**MAX_QUBITS:
            raise RegisterOverflowError(f"register exceeds {MAX_QUBITS} qubits")
        if not np.all(np.isfinite(amps)):
            raise ValueError("amplitudes must be finite")
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state is not normalized (squared norm {norm!r})")
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def _trusted(cls, amps: np.ndarray) -> PureState:
        # Skips validation for results of norm-preserving kernels.
        obj = object.__new__(cls)
        amps = amps.reshape(-1)
        amps.flags.writeable = False
        object.__setattr__(obj, "amplitudes", amps)
        return obj

    @classmethod
    def basis(cls, bits: str | Sequence[int]) -> PureState:
        bits = [int(b) for b in bits]
        if any(b not in (0, 1) for b in bits):
            raise ValueError("basis label must be binary")
        amps = np.zeros(2 ** len(bits), dtype=complex)
        amps[int("".join(map(str, bits)) or "0", 2)] = 1.0
        return cls._trusted(amps)

    @classmethod
    def from_amplitudes(cls, amps: Iterable[complex], normalize: bool = False) -> PureState:
        amps = np.asarray(list(amps) if not isinstance(amps, np.ndarray) else amps, dtype=complex)
        if normalize:
            amps = amps / np.linalg.norm(amps)
        return cls(amps)

    @property
    def num_qubits(self) -> int:
        return self.amplitudes.size.bit_length() - 1

    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def __len__(self) -> int:
        return self.amplitudes.size

    def __repr__(self) -> str:
        terms = [
            f"({a.real:+.6g}{a.imag:+.6g}j)|{i:0{self.num_qubits}b}>"
            for i, a in enumerate(self.amplitudes)
            if a != 0
        ]
        return f"PureState({' '.join(terms)})"


@dataclass(frozen=True, eq=False)
class GateMatrix:
    """A ``2**k x 2**k`` unitary acting on ``k`` qubits.

    Unitarity is checked once here, so kernels can trust every instance.
    """

    matrix: np.ndarray = field(repr=False)
    name: str = "U"

    def __post_init__(self) -> None:
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or not _is_power_of_two(m.shape[0]):
            raise ValueError(f"gate {self.name!r} must be square with power-of-two size")
        if not np.all(np.isfinite(m)):
            raise NonUnitaryGateError(f"gate {self.name!r} has non-finite entries")
        dev = unitarity_deviation(m)
        if dev > UNITARY_TOL:
            raise NonUnitaryGateError(f"gate {self.name!r} deviates from unitary by {dev:.3g}")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def arity(self) -> int:
        return self.matrix.shape[0].bit_length() - 1


def unitarity_deviation(matrix: np.ndarray) -> float:
    """Max-entry deviation of ``U^dagger U`` from the identity."""
    m = np.asarray(matrix, dtype=complex)
    return float(np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0]))))


class RandomStream:
    """Deterministic 64-bit-seeded uniform stream with per-trial substreams.

    Counter-based (Philox): the key is the seed and the trial index occupies
    its own counter word, so ``RandomStream(seed).substream(i)`` depends only
    on ``(seed, i)`` and trials can run in any order or process.
    """

    __slots__ = ("seed", "index", "_bitgen", "_gen", "_state")

    def __init__(self, seed: int, index: Optional[int] = None):
        self.seed = int(seed) & 0xFFFF_FFFF_FFFF_FFFF
        key = np.array([self.seed, 0], dtype=np.uint64)
        self._bitgen = np.random.Philox(key=key)
        self._gen = np.random.Generator(self._bitgen)
        self._state = {
            "bit_generator": "Philox",
            "state": {"counter": np.zeros(4, dtype=np.uint64), "key": key},
            "buffer": np.zeros(4, dtype=np.uint64),
            "buffer_pos": 4,
            "has_uint32": 0,
            "uinteger": 0,
        }
        self._seat(index)

    def _seat(self, index: Optional[int]) -> None:
        if index is not None and not 0 <= index < 2**64 - 1:
            raise ValueError(f"substream index {index} out of range")
        self.index = index
        # word 2 = 0 is the root stream; substream i uses word 2 = i + 1
        self._state["state"]["counter"][2] = 0 if index is None else index + 1
        self._bitgen.state = self._state

    def substream(self, index: int) -> RandomStream:
        return RandomStream(self.seed, index)

    def iter_substreams(self, start: int, stop: int) -> Iterator[RandomStream]:
        """Yield substreams ``start..stop-1`` by re-seating one generator.

        Each yielded stream is only valid until the next one is produced.
        """
        stream = RandomStream(self.seed, start)
        for i in range(start, stop):
            if i != start:
                stream._seat(i)
            yield stream

    def random(self) -> float:
        return self._gen.random()

    @property
    def generator(self) -> np.random.Generator:
        return self._gen


def _check_targets(targets: Sequence[int], num_qubits: int) -> tuple[int, ...]:
    targets = tuple(int(t) for t in targets)
    if len(set(targets)) != len(targets):
        raise ValueError(f"duplicate target qubits in {targets}")
    for t in targets:
        if not 0 <= t < num_qubits:
            raise IndexError(f"qubit {t} out of range for {num_qubits}-qubit register")
    return targets


def tensor(left: PureState, right: PureState, max_qubits: int = MAX_QUBITS) -> PureState:
    """Kronecker product; ``left`` supplies the leading (most significant) qubits."""
    if left.num_qubits + right.num_qubits > max_qubits:
        raise RegisterOverflowError(
            f"combined register of {left.num_qubits + right.num_qubits} qubits exceeds {max_qubits}"
        )
    return PureState._trusted(np.kron(left.amplitudes, right.amplitudes))


def apply_gate(state: PureState, gate: GateMatrix, targets: Sequence[int]) -> PureState:
    """Apply ``gate`` on ``targets``; ``targets[0]`` is the gate's leading qubit."""
    n = state.num_qubits
    targets = _check_targets(targets, n)
    k = gate.arity
    if len(targets) != k:
        raise ValueError(f"gate {gate.name!r} acts on {k} qubits, got {len(targets)} targets")
    psi = state.amplitudes.reshape((2,) * n)
    op = gate.matrix.reshape((2,) * (2 * k))
    out = np.tensordot(op, psi, axes=(tuple(range(k, 2 * k)), targets))
    out = np.moveaxis(out, tuple(range(k)), targets)
    return PureState._trusted(np.ascontiguousarray(out).reshape(-1))


def marginal_probabilities(state: PureState, targets: Sequence[int]) -> np.ndarray:
    """Outcome probabilities of ``targets``, indexed by the outcome read as a binary number."""
    targets = _check_targets(targets, state.num_qubits)
    return _marginal(state, targets)


def cumulative(probs: np.ndarray) -> list[float]:
    return np.cumsum(probs).tolist()


def sample_from_cdf(cdf: Sequence[float], rng: RandomStream) -> int:
    """Draw one index using exactly one uniform from ``rng``."""
    u = rng.random() * cdf[-1]
    # u < cdf[-1], so the first bin whose cdf exceeds u has nonzero mass
    return min(bisect_right(cdf, u), len(cdf) - 1)


def sample_index(probs: np.ndarray, rng: RandomStream) -> int:
    return sample_from_cdf(cumulative(probs), rng)


def _marginal(state: PureState, targets: tuple[int, ...]) -> np.ndarray:
    n = state.num_qubits
    probs = (np.abs(state.amplitudes) ** 2).reshape((2,) * n)
    rest = tuple(q for q in range(n) if q not in targets)
    marg = probs.sum(axis=rest) if rest else probs
    # sum() keeps the remaining axes in ascending order; reorder to match targets
    order = sorted(targets)
    marg = np.transpose(marg, [order.index(t) for t in targets])
    return marg.reshape(-1)


def to_bits(index: int, width: int) -> Bits:
    return tuple((index >> (width - 1 - j)) & 1 for j in range(width))


def branch_probabilities(state: PureState, targets: Sequence[int]) -> dict[Bits, float]:
    """Born probabilities of every outcome of measuring ``targets``.

    Outcomes with exactly zero probability are omitted.
    """
    targets = _check_targets(targets, state.num_qubits)
    marg = _marginal(state, targets)
    return {to_bits(i, len(targets)): float(p) for i, p in enumerate(marg) if p != 0.0}


def project(state: PureState, targets: Sequence[int], outcome: Sequence[int]) -> tuple[float, PureState]:
    """Project onto ``outcome`` for ``targets``; returns (probability, renormalized state)."""
    n = state.num_qubits
    targets = _check_targets(targets, n)
    outcome = tuple(int(b) for b in outcome)
    if len(outcome) != len(targets) or any(b not in (0, 1) for b in outcome):
        raise ValueError(f"outcome {outcome} does not match targets {targets}")
    psi = state.amplitudes.reshape((2,) * n)
    idx: list = [slice(None)] * n
    for t, b in zip(targets, outcome):
        idx[t] = b
    idx = tuple(idx)
    block = psi[idx]
    prob = float(np.vdot(block, block).real)
    if prob == 0.0:
        raise ValueError(f"outcome {outcome} has zero probability")
    out = np.zeros_like(psi)
    out[idx] = block / np.sqrt(prob)
    return prob, PureState._trusted(out.reshape(-1))


def measure(state: PureState, targets: Sequence[int], rng: RandomStream) -> tuple[Bits, float, PureState]:
    """Computational-basis measurement of ``targets`` with Born-rule sampling.

    The register keeps its size; measured qubits are left in the observed
    basis state.
    """
    targets = _check_targets(targets, state.num_qubits)
    i = sample_index(_marginal(state, targets), rng)
    outcome = to_bits(i, len(targets))
    prob, collapsed = project(state, targets, outcome)
    return outcome, prob, collapsed


def fidelity(state: PureState, reference: PureState) -> float:
    """Squared overlap ``|<reference|state>|**2``."""
    if state.num_qubits != reference.num_qubits:
        raise ValueError(
            f"dimension mismatch: {state.num_qubits} vs {reference.num_qubits} qubits"
        )
    f = abs(np.vdot(reference.amplitudes, state.amplitudes)) ** 2
    return float(min(f, 1.0))

