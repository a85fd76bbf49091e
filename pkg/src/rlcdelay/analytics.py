"""Closed-form and semi-analytic delay of retransmission and RLC(K, F).

Everything here is a pure function of its arguments.  The embedded chain is
the queue length S observed at bulk selection moments; its generating
function is

    P(z) = sum_{k<K} P_k (z^K b_k(beta) - z^k b_K(beta)) / (z^K - b_K(beta)),

with ``beta = lam z + 1 - lam``.  The K boundary unknowns P_0..P_{K-1} are
pinned by the K - 1 zeros of the denominator inside the unit disk (the
numerator must vanish there too) plus the normalization P(1) = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial

from .errors import NumericallyDegenerate, RootCountMismatch, UnstableQueue
from .gf import GOOD, INFINITE
from .service import build_model, model_family, moments

SATURATION_GUARD = 0.999
ROOT_RESIDUAL = 1e-9
DISK_MARGIN = 1e-9
REPEAT_TOL = 1e-7
MAX_CONDITION = 1e12


@dataclass(frozen=True)
class ChannelParams:
    q: float
    lam: float

    def __post_init__(self):
        if not 0 < self.q <= 1:
            raise ValueError("q must lie in (0, 1]")
        if not 0 <= self.lam < 1:
            raise ValueError("lambda must lie in [0, 1)")

    def beta(self, z):
        """Arrival p.g.f. of one slot: lam z + 1 - lam."""
        return self.lam * z + 1.0 - self.lam


def retransmission_delay(params):
    """Return ``(W_RE, D_RE)`` for plain ARQ retransmission."""
    q, lam = params.q, params.lam
    if lam >= q:
        raise UnstableQueue(f"lambda={lam} >= q={q}")
    wait = lam * (1.0 - q) / (q * (q - lam))
    return wait, 1.0 / q + wait


def stability_threshold(q, K, field=INFINITE, mode=GOOD):
    """Saturation arrival rate K / E[X_K] (exactly q for the infinite field)."""
    if field.is_infinite:
        return float(q)
    return K / moments(build_model(q, field, K, mode))[0]


def _check_stable(params, family):
    K = len(family) - 1
    threshold = K / moments(family[K])[0]
    if params.lam > SATURATION_GUARD * threshold:
        raise UnstableQueue(
            f"lambda={params.lam} exceeds {SATURATION_GUARD} x saturation point {threshold:.6g}"
        )
    return threshold


def _denominator(params, bK):
    def D(z):
        return z ** bK.k - bK.pgf(params.beta(z))

    def dD(z):
        return bK.k * z ** (bK.k - 1) - params.lam * bK.pgf_derivative(params.beta(z))

    return D, dD


def _cleared_polynomial(params, bK):
    """z^K prod(1 - (1-g) beta) - prod(g) beta^K, whose zeros include those of D."""
    beta = Polynomial([1.0 - params.lam, params.lam])
    left = Polynomial([0.0] * bK.k + [1.0])
    right = Polynomial([1.0])
    for g in bK.stages:
        left = left * (1.0 - (1.0 - g) * beta)
        right = right * (g * beta)
    return left - right


def denominator_roots(params, K, family):
    """Zeros of z^K - b_K(beta(z)) strictly inside the unit disk.

    Exactly K - 1 are expected (counted with multiplicity) in the stable
    regime.  Non-real zeros come back in conjugate pairs, sorted by angle.
    """
    if K == 1 or params.lam == 0:
        return np.zeros(0, dtype=complex)
    _check_stable(params, family)
    bK = family[K]
    D, dD = _denominator(params, bK)
    candidates = _cleared_polynomial(params, bK).roots().astype(complex)
    polished = []
    for z in candidates:
        if abs(z) > 2.0:
            polished.append(z)
            continue
        for _ in range(50):
            step = D(z) / dD(z)
            z = z - step
            if abs(step) < 1e-15 * max(1.0, abs(z)):
                break
        polished.append(z)
    inside = [z for z in polished if abs(z) < 1.0 - DISK_MARGIN]
    inside = [complex(z.real, 0.0) if abs(z.imag) < 1e-12 else z for z in inside]
    if len(inside) != K - 1 or any(abs(D(z)) >= ROOT_RESIDUAL for z in inside):
        raise RootCountMismatch(
            f"expected {K - 1} interior zeros with residual < {ROOT_RESIDUAL}, "
            f"got {len(inside)} of {len(polished)} candidates",
            candidates=polished,
        )
    # enforce exact conjugate symmetry
    upper = [z for z in inside if z.imag > 0]
    real = sorted(z.real for z in inside if z.imag == 0)
    upper.sort(key=lambda z: (np.angle(z), abs(z)))
    roots = [complex(x, 0.0) for x in real]
    for z in upper:
        roots += [z, z.conjugate()]
    if len(roots) != K - 1:
        raise RootCountMismatch("non-real zeros are not conjugate-paired", candidates=polished)
    return np.array(roots, dtype=complex)


@dataclass(frozen=True)
class StationaryBoundary:
    """Boundary probabilities P_0..P_{K-1} of the departure-epoch chain."""

    boundary: np.ndarray
    roots: np.ndarray
    K: int
    params: ChannelParams
    family: tuple = field(repr=False)
    repeated_roots: bool = False

    def numerator(self, z):
        K, family, beta = self.K, self.family, self.params.beta(z)
        bK = family[K].pgf(beta)
        return sum(p * (z**K * family[k].pgf(beta) - z**k * bK) for k, p in enumerate(self.boundary))

    def denominator(self, z):
        return z**self.K - self.family[self.K].pgf(self.params.beta(z))

    def pgf(self, z):
        return queue_pgf_eval(self, z)

    @property
    def tail(self):
        """Pr{S >= K}."""
        return max(0.0, 1.0 - float(np.sum(self.boundary)))


def _column_terms(params, family, z, order):
    """Value (order 0) or first derivative of each z^K b_k(beta) - z^k b_K(beta)."""
    K = len(family) - 1
    beta = params.beta(z)
    bK = family[K]
    if order == 0:
        vK = bK.pgf(beta)
        return [z**K * family[k].pgf(beta) - z**k * vK for k in range(K)]
    vK, dK = bK.pgf(beta), bK.pgf_derivative(beta) * params.lam
    out = []
    for k in range(K):
        bk = family[k]
        v, d = bk.pgf(beta), bk.pgf_derivative(beta) * params.lam
        left = K * z ** (K - 1) * v + z**K * d
        right = (k * z ** (k - 1) if k else 0.0) * vK + z**k * dK
        out.append(left - right)
    return out


def _cluster(roots):
    """Group numerically coincident roots: list of (representative, multiplicity)."""
    groups = []
    for z in roots:
        for g in groups:
            if abs(g[0] - z) < REPEAT_TOL:
                g[1] += 1
                break
        else:
            groups.append([z, 1])
    return [(z, m) for z, m in groups]


def stationary_boundary(params, K, family=None):
    """Solve for P_0..P_{K-1}.

    ``family`` defaults to the infinite-field models; pass
    :func:`rlcdelay.service.model_family` output for a concrete field.
    """
    if family is None:
        family = model_family(params.q, INFINITE, K)
    if len(family) != K + 1:
        raise ValueError("family must hold models for bulk sizes 0..K")
    _check_stable(params, family)
    if params.lam == 0:
        boundary = np.zeros(K)
        boundary[0] = 1.0
        return StationaryBoundary(boundary, np.zeros(0, dtype=complex), K, params, tuple(family))
    roots = denominator_roots(params, K, family)
    rows, rhs = [], []
    repeated = False
    for z, mult in _cluster(roots):
        if mult > 2:
            raise NumericallyDegenerate(f"zero of multiplicity {mult} at {z}")
        repeated |= mult > 1
        if z.imag < 0:
            continue
        for order in range(mult):
            terms = np.array(_column_terms(params, family, z, order), dtype=complex)
            rows.append(terms.real)
            rhs.append(0.0)
            if z.imag > 0:
                rows.append(terms.imag)
                rhs.append(0.0)
    E = [moments(m)[0] for m in family]
    lam = params.lam
    rows.append([K - k + lam * (E[k] - E[K]) for k in range(K)])
    rhs.append(K - lam * E[K])
    A, b = np.array(rows, dtype=float), np.array(rhs)
    if A.shape != (K, K):
        raise NumericallyDegenerate(f"boundary system has shape {A.shape}, expected ({K}, {K})")
    # equilibrate: columns for high k shrink like |z|^k at small roots
    row_scale = 1.0 / np.abs(A).max(axis=1)
    A, b = A * row_scale[:, None], b * row_scale
    col_scale = 1.0 / np.abs(A).max(axis=0)
    A = A * col_scale
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise NumericallyDegenerate(f"boundary system condition number {cond:.3g}")
    P = np.linalg.solve(A, b) * col_scale
    if np.any(P < -1e-10) or P.sum() > 1 + 1e-9:
        raise NumericallyDegenerate(f"boundary solve produced invalid probabilities {P}")
    P = np.clip(P, 0.0, 1.0)
    return StationaryBoundary(P, roots, K, params, tuple(family), repeated)


def queue_pgf_eval(boundary, z):
    """P(z) = E[z^S] at departure epochs, for |z| <= 1."""
    if abs(z - 1.0) < 1e-9:
        return 1.0
    near_root = any(abs(z - r) < 1e-6 for r in boundary.roots)
    den = boundary.denominator(z)
    if near_root or abs(den) < 1e-12:
        # removable singularity: average over a small circle around z
        d = 1e-4
        pts = [z + d * w for w in (1, 1j, -1, -1j)]
        return sum(boundary.numerator(p) / boundary.denominator(p) for p in pts) / 4
    return boundary.numerator(z) / den


def queue_distribution(boundary, n=1024):
    """Pr{S = j} for j < n, inverting P(z) by FFT on the unit circle.

    Aliasing folds mass at j + n, j + 2n, ... onto j, so the error is at
    most Pr{S >= n}.
    """
    points = np.exp(2j * np.pi * np.arange(n) / n)
    values = np.array([queue_pgf_eval(boundary, complex(w)) for w in points])
    return np.clip(np.fft.fft(values).real / n, 0.0, None)


def mean_queue_at_departure(boundary):
    """Mean queue length left behind at departures, P'(1)."""
    K, lam, family = boundary.K, boundary.params.lam, boundary.family
    mom = [moments(m) for m in family]
    E = [m[0] for m in mom]
    F = [m[1] for m in mom]
    d1 = K - lam * E[K]
    d2 = K * (K - 1) - lam**2 * F[K]
    n1 = n2 = 0.0
    for k, p in enumerate(boundary.boundary):
        n1 += p * (K - k + lam * (E[k] - E[K]))
        n2 += p * ((K * (K - 1) + 2 * K * lam * E[k] + lam**2 * F[k]) - (k * (k - 1) + 2 * k * lam * E[K] + lam**2 * F[K]))
    return (n2 * d1 - n1 * d2) / (2 * d1 * d1)


def delay_littles_approx(s_bar, lam):
    """S_bar / lambda; NaN when lambda is zero."""
    if lam == 0:
        return math.nan
    return s_bar / lam


@dataclass(frozen=True)
class BulkDistribution:
    probs: np.ndarray  # probs[k-1] = Pr{bulk has size k}
    K: int

    def __getitem__(self, k):
        return float(self.probs[k - 1])

    @property
    def mean_size(self):
        return float(np.dot(np.arange(1, self.K + 1), self.probs))


def bulk_distribution(boundary):
    K, P = boundary.K, boundary.boundary
    B = np.zeros(K)
    if K == 1:
        B[0] = 1.0
    else:
        B[0] = P[0] + P[1]
        B[1 : K - 1] = P[2:K]
        B[K - 1] = max(0.0, 1.0 - B[: K - 1].sum())
    return BulkDistribution(B, K)


def _packet_average(bulks, per_bulk_total):
    """Average over packets of a per-bulk total delay contribution."""
    sizes = np.arange(1, bulks.K + 1)
    return float(np.dot(bulks.probs, per_bulk_total) / np.dot(bulks.probs, sizes))


def delay_infinite_exact(params, K):
    """Mean delay of RLC(K) over an unbounded field.

    Each packet is delayed exactly as under retransmission, plus the slots
    between its own turn and the end of its bulk; packet j of a size-k bulk
    stays (k - j + 1) successful slots in service.  The extra term is
    averaged over packets, i.e. bulk probabilities are weighted by size.
    """
    wait, _ = retransmission_delay(params)
    bulks = bulk_distribution(stationary_boundary(params, K))
    k = np.arange(1, K + 1)
    return wait + _packet_average(bulks, k * (k + 1) / (2 * params.q))


def delay_finite_lower(params, K, field=INFINITE, mode=GOOD):
    """Retransmission waiting time plus the packet-averaged RLC service time.

    With stages g_r, packet j of a size-k bulk is served over stages
    j-1..k-1, so a bulk contributes sum_r (r + 1) / g_r slot-packets.
    """
    family = model_family(params.q, field, K, mode)
    wait, _ = retransmission_delay(params)
    bulks = bulk_distribution(stationary_boundary(params, K, family))
    totals = np.array([sum((r + 1) / g for r, g in enumerate(family[k].stages)) for k in range(1, K + 1)])
    return wait + _packet_average(bulks, totals)


def delay_ratio_bound(params, K):
    """Upper bound on D_RLC / D_RE for the infinite field.

    Equals (q-lam) K (K+1) / (2q(1-lam)) + lam(1-q) / (q(1-lam)), written
    as 1 + excess so that K = 1 gives exactly 1.
    """
    q, lam = params.q, params.lam
    if lam >= q:
        raise UnstableQueue(f"lambda={lam} >= q={q}")
    return 1.0 + (q - lam) * (K * (K + 1) / 2 - 1) / (q * (1.0 - lam))


@dataclass
class DelayReport:
    q: float
    lam: float
    K: int
    field: object
    mode: str
    W_RE: float | None = None
    D_RE: float | None = None
    D_rlc_exact_infinite: float | None = None
    D_rlc_approx: float | None = None
    D_rlc_lower_finite: float | None = None
    ratio_bound: float | None = None
    S_bar: float | None = None
    stability_threshold: float = math.nan
    unstable: list = field(default_factory=list)


def delay_report(params, K, field=INFINITE, mode=GOOD):
    """Every analytic quantity for one operating point; unstable ones stay None."""
    rep = DelayReport(params.q, params.lam, K, field, mode)
    rep.stability_threshold = stability_threshold(params.q, K, field, mode)

    def attempt(name, fn):
        try:
            setattr(rep, name, fn())
        except UnstableQueue:
            rep.unstable.append(name)

    attempt("W_RE", lambda: retransmission_delay(params)[0])
    attempt("D_RE", lambda: retransmission_delay(params)[1])
    attempt("D_rlc_exact_infinite", lambda: delay_infinite_exact(params, K))
    attempt("ratio_bound", lambda: delay_ratio_bound(params, K))
    family = model_family(params.q, field, K, mode)
    attempt("S_bar", lambda: mean_queue_at_departure(stationary_boundary(params, K, family)))
    if rep.S_bar is not None:
        rep.D_rlc_approx = delay_littles_approx(rep.S_bar, params.lam)
    attempt("D_rlc_lower_finite", lambda: delay_finite_lower(params, K, field, mode))
    return rep
