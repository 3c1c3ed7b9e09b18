"""Log-precision floats: representation, truncation and reference arithmetic.

A value of ``F_p`` is ``sign * M * 2**E`` with ``0 <= M <= q`` and
``-q <= E <= q`` where ``q = 2**(p/2 - 1) - 1``.  Values are kept in a
canonical form (smallest exponent, i.e. largest mantissa) so that two floats
are equal exactly when their bit encodings are equal.

Exact rationals are :class:`fractions.Fraction`.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence

Rat = Fraction


class ConfigError(ValueError):
    """Invalid parameters or a model that cannot be realised at this precision."""


class NonCanonicalError(ValueError):
    """A bit pattern that is not the encoding of a canonical float."""


DEFAULT_COUNT_BITS = 5


def check_precision(p: int) -> None:
    if not isinstance(p, int) or isinstance(p, bool):
        raise ConfigError(f"precision must be an integer, got {p!r}")
    if p < 4 or p % 2:
        raise ConfigError(f"precision must be an even integer >= 4, got {p}")


def q_of(p: int) -> int:
    check_precision(p)
    return 2 ** (p // 2 - 1) - 1


def mant_bits(p: int) -> int:
    return p // 2 - 1


def schedule_precision(n: int, c0: float, c1: float) -> int:
    """p = ceil(c1*log2 n) + c0, with an odd result collapsed to the even one below."""
    p = math.ceil(c1 * math.log2(n) - 1e-12) + c0 if n > 1 else c0
    p = int(math.ceil(p))
    return p - (p % 2)


@dataclass(frozen=True)
class Params:
    """Sizes of one circuit family member.

    ``count_bits`` is the width used for |argmax| counts and fixed-point
    headroom; it bounds the supported sequence length by ``2**count_bits - 1``.
    Keeping it independent of ``n`` makes gadget widths constant across a
    family, which is what makes circuit size an exact polynomial in ``n``.
    """

    n: int
    k: int
    p: int
    c0: float | None = None
    c1: float | None = None
    count_bits: int | None = None

    def __post_init__(self):
        if not isinstance(self.n, int) or self.n < 1:
            raise ConfigError(f"n must be a positive integer, got {self.n!r}")
        if not isinstance(self.k, int) or self.k < 1:
            raise ConfigError(f"k must be a positive integer, got {self.k!r}")
        check_precision(self.p)
        if (self.c0 is None) != (self.c1 is None):
            raise ConfigError("c0 and c1 must be given together")
        if self.c0 is not None:
            if self.c0 < 0 or self.c1 < 0:
                raise ConfigError("schedule constants must be non-negative")
            expected = schedule_precision(self.n, self.c0, self.c1)
            if expected != self.p:
                raise ConfigError(
                    f"schedule gives p={expected} for n={self.n}, params say p={self.p}")
        if self.count_bits is None:
            object.__setattr__(self, "count_bits",
                               max(DEFAULT_COUNT_BITS, self.n.bit_length()))
        elif self.count_bits < self.n.bit_length():
            raise ConfigError(
                f"count_bits={self.count_bits} cannot count up to n={self.n}")

    @classmethod
    def from_schedule(cls, n: int, k: int, c0: float, c1: float, **kw) -> "Params":
        return cls(n=n, k=k, p=schedule_precision(n, c0, c1), c0=c0, c1=c1, **kw)

    @property
    def q(self) -> int:
        return q_of(self.p)

    @property
    def nmax(self) -> int:
        return 2 ** self.count_bits - 1


@dataclass(frozen=True)
class FloatP:
    sign: int  # +1 or -1
    mag: int
    exp: int
    p: int

    def __post_init__(self):
        q = q_of(self.p)
        if self.sign not in (1, -1):
            raise ValueError(f"sign must be +1 or -1, got {self.sign}")
        if not 0 <= self.mag <= q or not -q <= self.exp <= q:
            raise ValueError(f"({self.mag}, {self.exp}) out of range for p={self.p}")

    @property
    def value(self) -> Fraction:
        return self.sign * self.mag * Fraction(2) ** self.exp

    def __neg__(self) -> "FloatP":
        if self.mag == 0:
            return self
        return FloatP(-self.sign, self.mag, self.exp, self.p)

    def __repr__(self):
        return f"FloatP({self.value}, p={self.p})"


def canonicalize(sign: int, mag: int, exp: int, p: int) -> FloatP:
    """Return the canonical representation of ``sign * mag * 2**exp``."""
    q = q_of(p)
    if mag == 0:
        return FloatP(1, 0, 0, p)
    if mag < 0:
        sign, mag = -sign, -mag
    value = Fraction(mag) * Fraction(2) ** exp
    for e in range(-q, q + 1):
        scaled = value / Fraction(2) ** e
        if scaled.denominator == 1 and scaled <= q:
            return FloatP(sign, int(scaled), e, p)
    raise ValueError(f"{sign * value} is not representable at p={p}")


def from_value(r, p: int) -> FloatP:
    """Canonical float for an exactly representable rational (raises otherwise)."""
    r = Fraction(r)
    den = r.denominator
    if den & (den - 1):
        raise ValueError(f"{r} is not a dyadic rational")
    return canonicalize(-1 if r < 0 else 1, abs(r.numerator), -(den.bit_length() - 1), p)


def truncate(r, p: int) -> FloatP:
    """Round a rational toward zero into F_p, clamping at +-q*2**q."""
    r = Fraction(r)
    q = q_of(p)
    if r < 0:
        return -truncate(-r, p)
    if r > q * 2 ** q:
        return canonicalize(1, q, q, p)
    # largest z in [-q, q] with r * 2**z <= q; z = -q always works here
    z = q
    while z > -q and r * Fraction(2) ** z > q:
        z -= 1
    m = math.floor(r * Fraction(2) ** z)
    return canonicalize(1, m, -z, p)


def encode(f: FloatP) -> list[int]:
    """Bit list of length p: mantissa sign, |M| LSB-first, exponent sign, |E| LSB-first."""
    h = f.p // 2
    bits = [0] * f.p
    bits[0] = 1 if f.sign < 0 else 0
    for i in range(h - 1):
        bits[1 + i] = (f.mag >> i) & 1
    bits[h] = 1 if f.exp < 0 else 0
    for i in range(h - 1):
        bits[h + 1 + i] = (abs(f.exp) >> i) & 1
    return bits


def encode_int(f: FloatP) -> int:
    return bits_to_int(encode(f))


def decode(bits: Sequence[int], p: int) -> FloatP:
    check_precision(p)
    if len(bits) != p:
        raise ValueError(f"expected {p} bits, got {len(bits)}")
    h = p // 2
    mag = sum(b << i for i, b in enumerate(bits[1:h]))
    emag = sum(b << i for i, b in enumerate(bits[h + 1:]))
    sign = -1 if bits[0] else 1
    exp = -emag if bits[h] else emag
    if bits[h] and emag == 0:
        raise NonCanonicalError(f"negative zero exponent in {''.join(map(str, bits))}")
    if mag == 0 and (bits[0] or emag):
        raise NonCanonicalError(f"non-canonical zero {''.join(map(str, bits))}")
    f = FloatP(sign, mag, exp, p)
    if f != canonicalize(sign, mag, exp, p):
        raise NonCanonicalError(f"non-canonical encoding {''.join(map(str, bits))}")
    return f


def decode_int(x: int, p: int) -> FloatP:
    return decode(int_to_bits(x, p), p)


def bits_to_int(bits: Iterable[int]) -> int:
    return sum(int(b) << i for i, b in enumerate(bits))


def int_to_bits(x: int, width: int) -> list[int]:
    return [(x >> i) & 1 for i in range(width)]


def zero(p: int) -> FloatP:
    return FloatP(1, 0, 0, p)


@lru_cache(maxsize=None)
def canonical_values(p: int) -> tuple[FloatP, ...]:
    """Every canonical float at precision p, sorted by value."""
    q = q_of(p)
    seen = {}
    for m in range(q + 1):
        for e in range(-q, q + 1):
            for s in (1, -1):
                f = canonicalize(s, m, e, p)
                seen[f.value] = f
    return tuple(seen[v] for v in sorted(seen))


@lru_cache(maxsize=None)
def canonical_codes(p: int) -> frozenset[int]:
    return frozenset(encode_int(f) for f in canonical_values(p))


def rand_canonical(p: int, seed=None, rng: random.Random | None = None) -> FloatP:
    """Uniform draw from the canonical values of F_p."""
    if rng is None:
        rng = random.Random(seed)
    return rng.choice(canonical_values(p))


# ---------------------------------------------------------------------------
# reference versions of the attention building blocks

FVec = tuple  # tuple[FloatP, ...]


def eq(a: FloatP, b: FloatP) -> int:
    return int(a.value == b.value)


def max_seq(s: Sequence[FloatP]) -> tuple[FloatP, set[int]]:
    """Maximum and its (1-based) argmax index set."""
    if not s:
        raise ValueError("max of an empty sequence")
    best = max(x.value for x in s)
    idx = {i + 1 for i, x in enumerate(s) if x.value == best}
    return s[min(idx) - 1], idx


def sel(x: Sequence[FloatP], y: int) -> tuple[FloatP, ...]:
    if y:
        return tuple(x)
    return tuple(zero(f.p) for f in x)


def sum_trunc(xs: Sequence[Sequence[FloatP]], p: int, k: int | None = None) -> tuple[FloatP, ...]:
    """Componentwise exact sum followed by a single truncation."""
    if not xs:
        if k is None:
            raise ValueError("k is needed for an empty sum")
        return tuple(zero(p) for _ in range(k))
    k = len(xs[0])
    if any(len(x) != k for x in xs):
        raise ValueError("vectors of unequal dimension")
    return tuple(truncate(sum((x[c].value for x in xs), Fraction(0)), p) for c in range(k))


def div_trunc(x: Sequence[FloatP], d: int, p: int) -> tuple[FloatP, ...]:
    if d < 1:
        raise ValueError(f"divisor must be positive, got {d}")
    return tuple(truncate(c.value / d, p) for c in x)


def shift_subtract_divmod(a: int, b: int) -> tuple[int, int]:
    """Integer division by repeatedly subtracting the largest left shift of b."""
    if b <= 0 or a < 0:
        raise ValueError("need a >= 0 and b > 0")
    quot = 0
    while a >= b:
        k = 0
        while (b << (k + 1)) <= a:
            k += 1
        quot += 1 << k
        a -= b << k
    return quot, a


def div_trunc_shift_subtract(x: FloatP, d: int, p: int) -> FloatP:
    """Integer-only ``truncate(x / d)`` built on shift-subtract division.

    Kept independent of Fraction arithmetic so it can serve as a second
    oracle for the divide step.
    """
    if d < 1:
        raise ValueError(f"divisor must be positive, got {d}")
    q = q_of(p)
    if x.mag == 0:
        return zero(p)
    # |x|/d * 2**z = mag * 2**(exp+z) / d ; find largest z with that <= q
    num_exp = x.exp  # |x| / d = mag * 2**num_exp / d
    if _gt(x.mag, num_exp, d, q * 2 ** q):
        return canonicalize(x.sign, q, q, p)
    z = q
    while z > -q and _gt(x.mag, num_exp + z, d, q):
        z -= 1
    e = num_exp + z
    if e >= 0:
        m, _ = shift_subtract_divmod(x.mag << e, d)
    else:
        m, _ = shift_subtract_divmod(x.mag, d << (-e))
    return canonicalize(x.sign, m, -z, p)


def _gt(mag: int, e: int, d: int, bound: int) -> bool:
    # mag * 2**e / d > bound, in integers
    if e >= 0:
        return (mag << e) > bound * d
    return mag > (bound * d) << (-e)
