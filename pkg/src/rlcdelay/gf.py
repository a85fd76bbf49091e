"""Finite-field arithmetic and incremental rank tracking.

Elements of GF(p^m) are encoded as integers in ``[0, p**m)`` whose base-p
digits are the polynomial coefficients (digit ``i`` is the coefficient of
``x**i``).  Every concrete field reduces modulo the lexicographically least
monic irreducible polynomial of its degree, so tables are reproducible:
GF(16) uses ``x^4 + x + 1`` and GF(256) uses ``x^8 + x^4 + x^3 + x + 1``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, DivisionByZero, InvalidFieldOrder, NotSimulatable

MAX_ORDER = 2**16

GOOD = "good"
BAD = "bad"
CODING_MODES = (GOOD, BAD)


class InfiniteField:
    """Marker for coding over a field of unbounded size.

    Nothing is sampled from it; a fresh coded packet is always innovative.
    """

    order = math.inf
    is_infinite = True
    name = "inf"

    def __repr__(self):
        return "INFINITE"

    def __reduce__(self):
        return "INFINITE"


INFINITE = InfiniteField()


def _prime_power(n):
    """Return ``(p, m)`` with ``p**m == n`` and p prime, or None."""
    if n < 2:
        return None
    p = next((d for d in range(2, math.isqrt(n) + 1) if n % d == 0), n)
    m, rest = 0, n
    while rest % p == 0:
        rest //= p
        m += 1
    return (p, m) if rest == 1 else None


def _digits(a, p, m):
    out = []
    for _ in range(m):
        a, r = divmod(a, p)
        out.append(r)
    return out


def _undigits(ds, p):
    a = 0
    for d in reversed(ds):
        a = a * p + d
    return a


def _poly_mod(num, den, p):
    """Remainder of ``num / den`` over GF(p); coefficient lists, low degree first."""
    num = list(num)
    dd = len(den) - 1
    while dd >= 0 and den[dd] == 0:
        dd -= 1
    lead_inv = pow(den[dd], p - 2, p)
    for i in range(len(num) - 1, dd - 1, -1):
        c = num[i] * lead_inv % p
        if c:
            for j in range(dd + 1):
                num[i - dd + j] = (num[i - dd + j] - c * den[j]) % p
    return num[:dd] if dd > 0 else []


def _clmul_mod(a, b, modulus, m):
    """Carry-less product of two GF(2^m) elements, reduced by ``modulus``."""
    r = 0
    while b:
        if b & 1:
            r ^= a
        b >>= 1
        a <<= 1
        if a >> m & 1:
            a ^= modulus
    return r


def _is_irreducible(poly, p):
    m = len(poly) - 1
    for d in range(1, m // 2 + 1):
        for tail in range(p**d):
            divisor = _digits(tail, p, d) + [1]
            if not any(_poly_mod(poly, divisor, p)):
                return False
    return True


@functools.lru_cache(maxsize=None)
def least_irreducible(p, m):
    """Lexicographically least monic irreducible polynomial of degree m over GF(p).

    Returned as a coefficient list, lowest degree first, length ``m + 1``.
    """
    for tail in range(p**m):
        poly = _digits(tail, p, m) + [1]
        if poly[0] == 0 and m > 1:
            continue
        if _is_irreducible(poly, p):
            return tuple(poly)
    raise AssertionError("no irreducible polynomial found")  # unreachable for prime p


def _prime_factors(n):
    out, d = [], 2
    while d * d <= n:
        if n % d == 0:
            out.append(d)
            while n % d == 0:
                n //= d
        d += 1
    if n > 1:
        out.append(n)
    return out


@dataclass(frozen=True, eq=False)
class GaloisField:
    """A concrete finite field GF(p^m) backed by log/antilog tables.

    Use :func:`field_make` rather than constructing directly; it caches one
    instance per order.
    """

    order: int
    characteristic: int
    degree: int
    modulus: tuple = field(repr=False)
    exp: np.ndarray = field(repr=False)
    log: np.ndarray = field(repr=False)

    is_infinite = False

    @property
    def name(self):
        return str(self.order)

    def __reduce__(self):
        return (field_make, (self.order,))

    def poly_mul(self, a, b):
        """Schoolbook product modulo the field polynomial (no tables)."""
        p, m = self.characteristic, self.degree
        if p == 2:
            return _clmul_mod(a, b, _undigits(list(self.modulus), 2), m)
        da, db = _digits(a, p, m), _digits(b, p, m)
        prod = [0] * (2 * m - 1)
        for i, x in enumerate(da):
            if x:
                for j, y in enumerate(db):
                    prod[i + j] = (prod[i + j] + x * y) % p
        rem = _poly_mod(prod, list(self.modulus), p) if m > 1 else prod
        return _undigits((list(rem) + [0] * m)[:m], p)

    def add(self, a, b):
        p = self.characteristic
        if p == 2:
            return a ^ b
        if self.degree == 1:
            return (a + b) % p
        return _undigits([(x + y) % p for x, y in zip(_digits(a, p, self.degree), _digits(b, p, self.degree))], p)

    def neg(self, a):
        p = self.characteristic
        if p == 2:
            return a
        if self.degree == 1:
            return -a % p
        return _undigits([-x % p for x in _digits(a, p, self.degree)], p)

    def sub(self, a, b):
        return self.add(a, self.neg(b))

    def mul(self, a, b):
        if a == 0 or b == 0:
            return 0
        return int(self.exp[self.log[a] + self.log[b]])

    def inv(self, a):
        if a == 0:
            raise DivisionByZero("0 has no multiplicative inverse")
        return int(self.exp[(self.order - 1 - self.log[a]) % (self.order - 1)])

    def div(self, a, b):
        return self.mul(a, self.inv(b))

    def arith(self, op, a, b=None):
        """Dispatch ``op`` in {'add', 'mul', 'inv'}."""
        for x in (a, b):
            if x is not None and not 0 <= x < self.order:
                raise ValueError(f"{x} is not an element of GF({self.order})")
        if op == "inv":
            return self.inv(a)
        if op in ("add", "mul"):
            return getattr(self, op)(a, b)
        raise ValueError(f"unknown field operation {op!r}")


def _build(order):
    pm = _prime_power(order)
    if pm is None or order > MAX_ORDER:
        raise InvalidFieldOrder(f"{order} is not a prime power in [2, {MAX_ORDER}]")
    p, m = pm
    modulus = least_irreducible(p, m) if m > 1 else (0, 1)
    shell = GaloisField(order, p, m, modulus, np.zeros(0, np.int64), np.zeros(0, np.int64))
    n = order - 1
    factors = _prime_factors(n) if n > 1 else []

    def power(a, e):
        r = 1
        while e:
            if e & 1:
                r = shell.poly_mul(r, a)
            a = shell.poly_mul(a, a)
            e >>= 1
        return r

    gen = next(g for g in range(1, order) if all(power(g, n // f) != 1 for f in factors))
    exp = np.zeros(2 * n, dtype=np.int64)
    log = np.full(order, -1, dtype=np.int64)
    x = 1
    for i in range(n):
        exp[i] = x
        log[x] = i
        x = shell.poly_mul(x, gen)
    exp[n:] = exp[:n]
    exp.flags.writeable = False
    log.flags.writeable = False
    return GaloisField(order, p, m, modulus, exp, log)


@functools.lru_cache(maxsize=None)
def _cached(order):
    return _build(order)


def field_make(order):
    """Return the field of the given order.

    ``order`` may be a prime power up to 2**16, or ``"inf"``/``math.inf``
    for :data:`INFINITE`.
    """
    if order is INFINITE:
        return INFINITE
    if isinstance(order, str):
        if order.strip().lower() in ("inf", "infinite", "infinity"):
            return INFINITE
        try:
            order = int(order)
        except ValueError:
            raise InvalidFieldOrder(f"cannot parse field order {order!r}") from None
    if isinstance(order, float):
        if math.isinf(order):
            return INFINITE
        if not order.is_integer():
            raise InvalidFieldOrder(f"{order} is not an integer")
        order = int(order)
    if isinstance(order, GaloisField):
        return order
    return _cached(int(order))


class RankState:
    """Receiver-side span of the coefficient vectors collected for one bulk.

    Rows are kept in echelon form with unit pivots, so each update costs
    O(k^2) field operations.
    """

    def __init__(self, gf, dimension):
        if gf.is_infinite:
            raise NotSimulatable("rank tracking needs a concrete field")
        self.gf = gf
        self.dimension = dimension
        self.basis = np.zeros((dimension, dimension), dtype=np.int64)
        self.pivot_row = [-1] * dimension
        self.rank = 0
        self.received = 0

    def reduce(self, v):
        """Residual of ``v`` after elimination against the basis."""
        gf = self.gf
        v = [int(x) for x in v]
        for col in range(self.dimension):
            row = self.pivot_row[col]
            if v[col] and row >= 0:
                c = v[col]
                for j in range(col, self.dimension):
                    v[j] = gf.sub(v[j], gf.mul(c, int(self.basis[row, j])))
        return v

    def update(self, v):
        """Insert ``v``; return True iff it raised the rank."""
        if len(v) != self.dimension:
            raise DimensionMismatch(f"vector of length {len(v)} for dimension {self.dimension}")
        self.received += 1
        v = self.reduce(v)
        lead = next((i for i, x in enumerate(v) if x), None)
        if lead is None:
            return False
        scale = self.gf.inv(v[lead])
        self.basis[self.rank] = [self.gf.mul(scale, x) for x in v]
        self.pivot_row[lead] = self.rank
        self.rank += 1
        return True

    @property
    def complete(self):
        return self.rank == self.dimension


def rank_update(state, v):
    """Functional form of :meth:`RankState.update`: ``(state, increased)``."""
    return state, state.update(v)


def sample_coefficients(gf, k, mode, rng):
    """Draw the coefficient vector of one coded packet for a bulk of size k.

    ``good`` never returns the zero vector.  ``bad`` allows it for k >= 2;
    a single-packet bulk is always sent uncoded.  Entries are drawn one at a
    time so the stream stays aligned with the compiled simulator.
    """
    if gf.is_infinite:
        raise NotSimulatable("cannot sample coefficients from the infinite field")
    if k < 1:
        raise ValueError("bulk size must be at least 1")
    if mode not in CODING_MODES:
        raise ValueError(f"coding mode must be one of {CODING_MODES}")
    allow_zero = mode == BAD and k >= 2
    while True:
        v = np.array([rng.integers(0, gf.order) for _ in range(k)], dtype=np.int64)
        if allow_zero or v.any():
            return v
