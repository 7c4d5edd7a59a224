"""Points, orderings, configuration and query descriptors.

Points are plain ``(x, y)`` tuples (``Point`` is a NamedTuple, so the two
interoperate).  Tuple comparison *is* the lexicographic x-order; the
y-order uses the key ``(y, x)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple, Tuple, Union

NEG_INF = float("-inf")
POS_INF = float("inf")

Key = Tuple[float, float]


class Point(NamedTuple):
    x: int
    y: int


def ykey(p) -> Key:
    """Sort key realising the lexicographic y-order."""
    return (p[1], p[0])


def compare_x(a, b) -> int:
    """Return -1, 0 or 1 according to the lexicographic x-order."""
    ka, kb = (a[0], a[1]), (b[0], b[1])
    return (ka > kb) - (ka < kb)


def compare_y(a, b) -> int:
    """Return -1, 0 or 1 according to the lexicographic y-order."""
    ka, kb = ykey(a), ykey(b)
    return (ka > kb) - (ka < kb)


class InvalidConfig(ValueError):
    pass


def iroot_ceil(n: int, q: int) -> int:
    """Smallest integer ``m >= 0`` with ``m**q >= n``."""
    if n <= 0:
        return 0
    if q == 1:
        return n
    m = int(round(n ** (1.0 / q))) if n.bit_length() < 1000 else 1 << (n.bit_length() // q)
    while m ** q < n:
        m += 1
    while m > 0 and (m - 1) ** q >= n:
        m -= 1
    return m


def parse_fraction(text: Union[str, Fraction, float, int]) -> Fraction:
    if isinstance(text, Fraction):
        return text
    if isinstance(text, str):
        return Fraction(text.strip())
    return Fraction(text).limit_denominator(1000)


@dataclass(frozen=True)
class Config:
    """Block size ``B``, exponent ``epsilon``, memory ``M`` (records), slack ``alpha``."""

    B: int
    epsilon: Fraction = Fraction(1, 2)
    M: int = 0
    alpha: int = 1
    delta: int = field(init=False, compare=False)
    sample_stride: int = field(init=False, compare=False)
    samples_per_block: int = field(init=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "epsilon", parse_fraction(self.epsilon))
        if self.M == 0:
            object.__setattr__(self, "M", 16 * self.B)
        b = max(int(self.B), 1)
        object.__setattr__(self, "delta", self.ceil_pow(1, self.epsilon, b))
        object.__setattr__(self, "sample_stride", self.delta)
        object.__setattr__(self, "samples_per_block", self.ceil_pow(1, 1 - self.epsilon, b))

    @staticmethod
    def ceil_pow(c: int, exponent: Fraction, base: int) -> int:
        """Exact ``ceil(c * base**exponent)`` for a rational exponent in [0, 1]."""
        p, q = exponent.numerator, exponent.denominator
        if p < 0:
            raise InvalidConfig("negative exponent")
        return iroot_ceil(c ** q * base ** p, q)

    def ceil_eps(self, c: int) -> int:
        """``ceil(c * B**epsilon)``."""
        return self.ceil_pow(c, self.epsilon, self.B)

    def ceil_coeps(self, c: int) -> int:
        """``ceil(c * B**(1 - epsilon))``."""
        return self.ceil_pow(c, 1 - self.epsilon, self.B)

    @property
    def child_capacity(self) -> int:
        return 4 * self.B * self.delta


def validate_config(c: Config) -> Config:
    if c.B < 4:
        raise InvalidConfig(f"block size B={c.B} must be at least 4")
    if not (0 < c.epsilon <= Fraction(1, 2)):
        raise InvalidConfig(f"epsilon={c.epsilon} must lie in (0, 1/2]")
    if c.M < 2 * c.B:
        raise InvalidConfig(f"memory M={c.M} must be at least 2B={2 * c.B}")
    if c.alpha < 1:
        raise InvalidConfig("alpha must be >= 1")
    if c.delta < 2:
        raise InvalidConfig(f"Delta={c.delta} must be at least 2")
    if c.B < 2 * c.delta:
        raise InvalidConfig(f"B={c.B} must be at least 2*Delta={2 * c.delta}")
    return c


@dataclass(frozen=True)
class ThreeSidedQuery:
    """The region ``[x1, x2] x [y, +inf)``."""

    x1: int
    x2: int
    y: float = NEG_INF

    def __post_init__(self):
        if self.x1 > self.x2:
            raise ValueError("x1 must not exceed x2")

    def __contains__(self, p) -> bool:
        return self.x1 <= p[0] <= self.x2 and p[1] >= self.y


@dataclass(frozen=True)
class TopKQuery:
    """The ``k`` highest points (by y-order) with ``x1 <= x <= x2``."""

    x1: int
    x2: int
    k: int

    def __post_init__(self):
        if self.x1 > self.x2:
            raise ValueError("x1 must not exceed x2")
        if self.k < 0:
            raise ValueError("k must be non-negative")


def x_bounds(x1, x2) -> Tuple[Key, Key]:
    """Inclusive key bounds in x-order for the coordinate range [x1, x2]."""
    return (x1, NEG_INF), (x2, POS_INF)
