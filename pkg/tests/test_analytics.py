import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import (
    analytic_grid,
    departure_chain_stationary,
    grid_id,
    infinite_grid,
    tv,
)
from rlcdelay.analytics import (
    BulkDistribution,
    ChannelParams,
    _packet_average,
    bulk_distribution,
    delay_finite_lower,
    delay_infinite_exact,
    delay_littles_approx,
    delay_ratio_bound,
    delay_report,
    denominator_roots,
    mean_queue_at_departure,
    queue_distribution,
    queue_pgf_eval,
    retransmission_delay,
    stability_threshold,
    stationary_boundary,
)
from rlcdelay.errors import UnstableQueue
from rlcdelay.gf import BAD, GOOD, INFINITE, field_make
from rlcdelay.service import model_family, moments

GRID = list(analytic_grid())
GRID_IDS = [grid_id(p) for p in GRID]


def family_of(params, K, F, mode):
    return model_family(params.q, F, K, mode)


def test_retransmission_examples():
    assert retransmission_delay(ChannelParams(0.5, 0.25)) == pytest.approx((1.0, 3.0))
    assert retransmission_delay(ChannelParams(1.0, 0.5)) == pytest.approx((0.0, 1.0))
    assert retransmission_delay(ChannelParams(0.5, 0.0)) == pytest.approx((0.0, 2.0))
    with pytest.raises(UnstableQueue):
        retransmission_delay(ChannelParams(0.5, 0.5))


def test_stability_threshold_examples(gf2):
    assert stability_threshold(0.5, 8, INFINITE) == 0.5
    assert stability_threshold(1.0, 2, gf2, GOOD) == pytest.approx(0.8)
    assert stability_threshold(0.5, 2, gf2, BAD) == pytest.approx(0.3)
    assert stability_threshold(0.5, 4, gf2, BAD) < stability_threshold(0.5, 4, gf2, GOOD) < 0.5


def test_threshold_increases_with_field_order():
    for K in (2, 4, 8):
        th = [stability_threshold(0.5, K, field_make(Q)) for Q in (2, 4, 16, 256)]
        assert all(a < b for a, b in zip(th, th[1:])) and th[-1] < 0.5


def test_roots_examples():
    p = ChannelParams(0.5, 0.2)
    assert denominator_roots(p, 1, model_family(0.5, INFINITE, 1)).size == 0
    fam = model_family(0.5, INFINITE, 2)
    (root,) = denominator_roots(p, 2, fam)
    # bisection on the real axis, where z^2 - b_2(beta(z)) changes sign on (-1, 0)
    D = lambda z: z * z - fam[2].pgf(p.beta(z))
    lo, hi = -1.0, 0.0
    assert D(lo) > 0 > D(hi)
    for _ in range(200):
        mid = (lo + hi) / 2
        lo, hi = (mid, hi) if D(mid) > 0 else (lo, mid)
    assert root.imag == 0 and root.real == pytest.approx(lo, abs=1e-12)


@pytest.mark.parametrize("point", GRID, ids=GRID_IDS)
def test_roots_residual_and_count(point):
    params, K, F, mode = point
    fam = family_of(*point)
    roots = denominator_roots(params, K, fam)
    assert roots.size == K - 1
    for z in roots:
        assert abs(z) < 1
        assert abs(z**K - fam[K].pgf(params.beta(z))) < 1e-9


@pytest.mark.parametrize("point", GRID, ids=GRID_IDS)
def test_boundary_matches_transition_matrix_oracle(point):
    params, K, F, mode = point
    fam = family_of(*point)
    b = stationary_boundary(params, K, fam)
    pi = departure_chain_stationary(params, fam, n=800)
    assert np.all((b.boundary >= 0) & (b.boundary <= 1))
    assert b.boundary == pytest.approx(pi[:K], abs=1e-8)
    assert tv(queue_distribution(b), pi) < 1e-7
    assert mean_queue_at_departure(b) == pytest.approx(np.dot(np.arange(pi.size), pi), rel=1e-6)


@pytest.mark.parametrize("point", GRID, ids=GRID_IDS)
def test_mean_queue_matches_numerical_derivative(point):
    params, K, F, mode = point
    b = stationary_boundary(params, K, family_of(*point))
    # P is analytic near 1; a centred difference on a small circle avoids z = 1 itself
    h = 1e-3
    d = lambda h: ((queue_pgf_eval(b, 1 + h) - queue_pgf_eval(b, 1 - h)) / (2 * h)).real
    numeric = (4 * d(h / 2) - d(h)) / 3
    assert mean_queue_at_departure(b) == pytest.approx(numeric, rel=1e-6)


def test_boundary_examples():
    b = stationary_boundary(ChannelParams(0.5, 0.25), 1)
    assert b.boundary[0] == pytest.approx(0.5, abs=1e-12)
    b0 = stationary_boundary(ChannelParams(0.5, 0.0), 4)
    assert list(b0.boundary) == [1, 0, 0, 0]
    assert queue_pgf_eval(b, 1.0) == 1.0
    assert queue_pgf_eval(b, 0.0) == pytest.approx(b.boundary[0])
    b2 = stationary_boundary(ChannelParams(0.5, 0.2), 2)
    assert queue_pgf_eval(b2, b2.roots[0]) == pytest.approx(queue_pgf_eval(b2, b2.roots[0] + 1e-3), abs=1e-2)
    with pytest.raises(UnstableQueue):
        stationary_boundary(ChannelParams(0.5, 0.5), 2)
    with pytest.raises(UnstableQueue):
        stationary_boundary(ChannelParams(0.5, 0.29999), 2, model_family(0.5, field_make(2), 2, BAD))


def test_mean_queue_k1_is_lambda_times_delay():
    for q, lam in ((0.5, 0.25), (0.9, 0.3), (0.9, 0.85)):
        p = ChannelParams(q, lam)
        assert mean_queue_at_departure(stationary_boundary(p, 1)) == pytest.approx(lam * retransmission_delay(p)[1])


def test_littles_approx_examples():
    assert math.isnan(delay_littles_approx(1.0, 0.0))
    assert delay_littles_approx(0.75, 0.25) == 3.0


def test_bulk_distribution_examples():
    b = stationary_boundary(ChannelParams(0.5, 0.25), 1)
    assert bulk_distribution(b)[1] == 1.0
    b = stationary_boundary(ChannelParams(0.5, 0.25), 4)
    B = bulk_distribution(b)
    assert B.probs.sum() == pytest.approx(1.0)
    assert B[1] == pytest.approx(b.boundary[0] + b.boundary[1])
    assert B[4] == pytest.approx(b.tail)


def test_exact_delay_examples():
    p = ChannelParams(0.5, 0.25)
    assert abs(delay_infinite_exact(p, 1) - retransmission_delay(p)[1]) < 1e-12
    # a bulk that is always full: packet j of K waits K - j + 1 successes
    full = BulkDistribution(np.array([0, 0, 0, 1.0]), 4)
    k = np.arange(1, 5)
    assert _packet_average(full, k * (k + 1) / (2 * 0.5)) == pytest.approx(5 / (2 * 0.5))


@pytest.mark.parametrize("q", [0.5, 0.9])
def test_exact_delay_k1_equals_retransmission_on_grid(q):
    for f in np.linspace(0.01, 0.99, 50):
        p = ChannelParams(q, f * q)
        assert abs(delay_infinite_exact(p, 1) - retransmission_delay(p)[1]) < 1e-12


@pytest.mark.parametrize("params,K", list(infinite_grid()), ids=str)
def test_infinite_field_orderings(params, K):
    exact = delay_infinite_exact(params, K)
    approx = delay_littles_approx(mean_queue_at_departure(stationary_boundary(params, K)), params.lam)
    if K == 1:
        assert approx == pytest.approx(exact, rel=1e-10)
    else:
        assert approx < exact
    assert delay_ratio_bound(params, K) >= exact / retransmission_delay(params)[1] - 1e-12
    assert delay_finite_lower(params, K, INFINITE) == pytest.approx(exact, rel=1e-12)
    if K > 1:
        assert exact >= delay_infinite_exact(params, K // 2) - 1e-12


@pytest.mark.parametrize("point", [p for p in GRID if not p[2].is_infinite], ids=grid_id)
def test_finite_lower_bound_dominates_infinite_exact(point):
    params, K, F, mode = point
    if params.lam >= params.q * 0.999:
        pytest.skip("beyond the infinite-field guard")
    assert delay_finite_lower(params, K, F, mode) >= delay_infinite_exact(params, K) - 1e-12


def test_ratio_bound_examples():
    assert delay_ratio_bound(ChannelParams(0.5, 0.25), 4) == pytest.approx(7.0)
    assert delay_ratio_bound(ChannelParams(0.5, 0.25), 1) == 1.0
    assert delay_ratio_bound(ChannelParams(0.5, 0.5 - 1e-9), 8) == pytest.approx(1.0, abs=1e-6)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.05, 1.0), st.floats(0.0, 0.99), st.integers(1, 8))
def test_ratio_bound_closed_form(q, frac, K):
    lam = frac * q
    p = ChannelParams(q, lam)
    expanded = (q - lam) * K * (K + 1) / (2 * q * (1 - lam)) + lam * (1 - q) / (q * (1 - lam)) if lam < 1 else 1.0
    assert delay_ratio_bound(p, K) == pytest.approx(expanded, rel=1e-12)
    assert delay_ratio_bound(p, K) >= 1.0


@settings(max_examples=60, deadline=None)
@given(st.sampled_from([0.5, 0.9]), st.floats(0.02, 0.95), st.sampled_from([2, 3, 4, 6]))
def test_exact_delay_decomposition(q, frac, K):
    """Exact RLC delay minus retransmission delay equals the packet-averaged extra service."""
    p = ChannelParams(q, frac * q)
    B = bulk_distribution(stationary_boundary(p, K))
    k = np.arange(1, K + 1)
    extra = np.dot(B.probs, k * (k - 1) / (2 * q)) / B.mean_size
    assert delay_infinite_exact(p, K) - retransmission_delay(p)[1] == pytest.approx(extra, rel=1e-9, abs=1e-12)


def test_report_marks_unstable_fields(gf2):
    rep = delay_report(ChannelParams(0.5, 0.32), 2, gf2, BAD)
    assert rep.D_RE is not None and rep.D_rlc_exact_infinite is not None
    assert rep.S_bar is None and rep.D_rlc_lower_finite is None
    assert set(rep.unstable) == {"S_bar", "D_rlc_lower_finite"}
    rep = delay_report(ChannelParams(0.5, 0.25), 4, gf2, BAD)
    assert rep.D_RE == pytest.approx(3.0) and rep.ratio_bound == pytest.approx(7.0)
    assert not rep.unstable


def test_moments_used_in_normalization_consistent():
    fam = model_family(0.5, INFINITE, 4)
    assert [moments(m)[0] for m in fam] == [2.0, 2.0, 4.0, 6.0, 8.0]
