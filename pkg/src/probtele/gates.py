"""Fixed protocol gates and the channel-dependent filter unitaries.

Filters act on ``|bob, ancilla>`` with the ancilla as the least significant
index bit, i.e. basis order ``|00>, |01>, |10>, |11>``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .statevector import GateMatrix

_R2 = 1 / math.sqrt(2)

_STANDARD = {
    "I": [[1, 0], [0, 1]],
    "X": [[0, 1], [1, 0]],
    "Z": [[1, 0], [0, -1]],
    # i*Y with Y = [[0, -i], [i, 0]]
    "iY": [[0, 1], [-1, 0]],
    # H|a> = ((-1)^a |a> + |not a>) / sqrt(2)
    "H": [[_R2, _R2], [_R2, -_R2]],
    "CNOT": [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]],
}

PAULI_CORRECTIONS = ("I", "X", "Z", "iY")


class ChannelOrderError(ValueError):
    """Channel amplitudes violate ``0 < b <= a``."""


class Orientation(enum.Enum):
    SCALE_ZERO = "scale-zero"  # |0> amplitude multiplied by b/a
    SCALE_ONE = "scale-one"


@lru_cache(maxsize=None)
def standard_gate(name: str) -> GateMatrix:
    try:
        return GateMatrix(np.array(_STANDARD[name], dtype=complex), name=name)
    except KeyError:
        raise ValueError(f"unknown gate {name!r}; expected one of {sorted(_STANDARD)}") from None


@dataclass(frozen=True)
class FilterSpec:
    a: float
    b: float
    orientation: Orientation = Orientation.SCALE_ZERO

    def __post_init__(self) -> None:
        check_channel_amplitudes(self.a, self.b)

    @property
    def ratio(self) -> float:
        return self.b / self.a

    @property
    def residual(self) -> float:
        # max() guards the a == b case against a tiny negative from rounding
        return math.sqrt(max(0.0, 1.0 - self.ratio**2))


def check_channel_amplitudes(a: float, b: float, tol: float = 1e-12) -> None:
    if not (math.isfinite(a) and math.isfinite(b)):
        raise ValueError("channel amplitudes must be finite")
    if abs(a * a + b * b - 1.0) > tol:
        raise ValueError(f"channel is not normalized: a^2 + b^2 = {a * a + b * b!r}")
    if b <= 0 or a <= 0:
        raise ChannelOrderError("channel amplitudes must be positive reals")
    if b > a:
        raise ChannelOrderError(
            f"b = {b} exceeds a = {a}; the filter needs b <= a. "
            "Swap the amplitudes (relabel the channel basis) so that b <= a."
        )


def build_u1(spec: FilterSpec) -> GateMatrix:
    """Filter that scales the ``|0>`` amplitude of Bob's qubit by ``b/a``.

    On ``(c0|0> + c1|1>)|0>`` the ancilla-0 block is ``(b/a) c0|0> + c1|1>``,
    and the remainder ``sqrt(1 - b^2/a^2) c0`` lands on ``|11>``.
    """
    if spec.orientation is not Orientation.SCALE_ZERO:
        raise ValueError("build_u1 needs orientation SCALE_ZERO")
    r, s = spec.ratio, spec.residual
    m = np.array(
        [
            [r, s, 0, 0],
            [0, 0, 0, -1],
            [0, 0, 1, 0],
            [s, -r, 0, 0],
        ],
        dtype=complex,
    )
    return GateMatrix(m, name="U1")


def build_mirror_filter(spec: FilterSpec) -> GateMatrix:
    """Filter that scales the ``|1>`` amplitude by ``b/a`` instead.

    Built as ``U1`` conjugated by ``X`` on Bob's qubit; the residual
    ``sqrt(1 - b^2/a^2) c1`` lands on ``|01>``.
    """
    if spec.orientation is not Orientation.SCALE_ONE:
        raise ValueError("build_mirror_filter needs orientation SCALE_ONE")
    u1 = build_u1(FilterSpec(spec.a, spec.b, Orientation.SCALE_ZERO)).matrix
    x = np.kron(standard_gate("X").matrix, np.eye(2))
    return GateMatrix(x @ u1 @ x, name="mirror")


@lru_cache(maxsize=256)
def filter_for(a: float, b: float, orientation: Orientation) -> GateMatrix:
    spec = FilterSpec(a, b, orientation)
    if orientation is Orientation.SCALE_ZERO:
        return build_u1(spec)
    return build_mirror_filter(spec)
