"""Shared grids and independent oracles for the test suite."""

import itertools

import numpy as np

from rlcdelay.analytics import ChannelParams, stability_threshold
from rlcdelay.gf import BAD, GOOD, INFINITE, field_make

GRID_Q = (0.5, 0.9)
GRID_FRACTIONS = tuple(round(0.1 * i, 1) for i in range(1, 10))
GRID_K = (1, 2, 4, 8)
GRID_FIELDS = (field_make(2), field_make(16), INFINITE)


def field_modes(K):
    """Distinct (field, mode) pairs: K=1 and the infinite field ignore the mode."""
    for F in GRID_FIELDS:
        modes = (GOOD,) if F.is_infinite or K == 1 else (GOOD, BAD)
        for mode in modes:
            yield F, mode


def analytic_grid(distinct=True):
    """(params, K, field, mode) for every stable point of the queue grid."""
    for q, K in itertools.product(GRID_Q, GRID_K):
        pairs = field_modes(K) if distinct else itertools.product(GRID_FIELDS, (GOOD, BAD))
        if distinct and K == 1:
            pairs = [(INFINITE, GOOD)]  # every field serves a single packet identically
        for F, mode in pairs:
            lam_star = stability_threshold(q, K, F, mode)
            for f in GRID_FRACTIONS:
                yield ChannelParams(q, f * lam_star), K, F, mode


def infinite_grid():
    for q, K, f in itertools.product(GRID_Q, GRID_K, GRID_FRACTIONS):
        yield ChannelParams(q, f * q), K


def grid_id(point):
    params, K, F, mode = point
    return f"q{params.q}-lam{params.lam:.4f}-K{K}-F{F.name}-{mode}"


def stage_arrivals(g, lam, tol=1e-16):
    """pmf of Bernoulli(lam) arrivals during a geometric(g) stage, by slot-wise DP."""
    alive = np.array([1.0])
    out = np.zeros(1)
    while alive.sum() > tol:
        alive = np.append(alive * (1 - lam), 0.0) + np.concatenate(([0.0], alive * lam))
        out = np.append(out, 0.0) + alive * g
        alive = alive * (1 - g)
    return out


def departure_chain_stationary(params, family, n=600):
    """Stationary law of the departure-epoch chain from a truncated transition matrix.

    From state i a bulk of size k = min(max(i, 1), K) is served and the
    next state is max(i, 1) - k plus the arrivals during its service.
    """
    K = len(family) - 1
    arrivals = []
    for k in range(1, K + 1):
        pmf = np.array([1.0])
        for g in family[k].stages:
            pmf = np.convolve(pmf, stage_arrivals(g, params.lam))
        arrivals.append(pmf[:n])
    T = np.zeros((n, n))
    for i in range(n):
        k = min(max(i, 1), K)
        base = max(i, 1) - k
        a = arrivals[k - 1][: n - base]
        T[i, base : base + a.size] = a
        T[i, -1] += 1.0 - T[i].sum()  # truncation mass stays in the last state
    A = T.T - np.eye(n)
    A[-1] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    return np.linalg.solve(A, rhs)


def tv(p, r):
    m = max(len(p), len(r))
    p = np.pad(np.asarray(p, float), (0, m - len(p)))
    r = np.pad(np.asarray(r, float), (0, m - len(r)))
    return 0.5 * np.abs(p - r).sum()


ACCEPTANCE_LINES = []


def record(criterion, ok, detail):
    """Log one PASS/FAIL line for an acceptance criterion, then assert it."""
    line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line
