"""Compiled slot loop.  Mirrors :class:`rlcdelay.simulator.SlotStepper` exactly."""

import numba
import numpy as np


@numba.njit(cache=True, inline="always")
def _gadd(a, b, p, m):
    if p == 2:
        return a ^ b
    if m == 1:
        return (a + b) % p
    out, scale = 0, 1
    for _ in range(m):
        out += ((a % p + b % p) % p) * scale
        a //= p
        b //= p
        scale *= p
    return out


@numba.njit(cache=True, inline="always")
def _gneg(a, p, m):
    if p == 2:
        return a
    if m == 1:
        return (p - a) % p
    out, scale = 0, 1
    for _ in range(m):
        out += ((p - a % p) % p) * scale
        a //= p
        scale *= p
    return out


@numba.njit(cache=True, inline="always")
def _gmul(a, b, exp, log):
    if a == 0 or b == 0:
        return 0
    return exp[log[a] + log[b]]


@numba.njit(cache=True)
def _rank_insert(v, k, rank, basis, pivot_row, p, m, Q, exp, log):
    for col in range(k):
        row = pivot_row[col]
        if v[col] != 0 and row >= 0:
            c = v[col]
            for j in range(col, k):
                v[j] = _gadd(v[j], _gneg(_gmul(c, basis[row, j], exp, log), p, m), p, m)
    lead = -1
    for j in range(k):
        if v[j] != 0:
            lead = j
            break
    if lead < 0:
        return False
    scale = exp[(Q - 1 - log[v[lead]]) % (Q - 1)]
    for j in range(k):
        basis[rank, j] = _gmul(scale, v[j], exp, log)
    pivot_row[lead] = rank
    return True


@numba.njit(cache=True)
def run_slots(
    arr_rng, ch_rng, cf_rng,
    lam, q, K, useful, vector, allow_zero_k2,
    Q, p, m, exp, log,
    slots, warmup, nbatch, max_departures, hist_len, record,
):
    cap = 1024
    qbuf = np.empty(cap, np.int64)
    head = 0
    qlen = 0
    bulk = np.empty(K, np.int64)
    k = 0
    rank = 0
    busy = False
    pending = False
    basis = np.zeros((K, K), np.int64)
    pivot_row = np.full(K, -1, np.int64)
    coeffs = np.zeros(K, np.int64)

    n = 0
    total = 0.0
    total_sq = 0.0
    batch_sum = np.zeros(nbatch)
    batch_cnt = np.zeros(nbatch, np.int64)
    dep_hist = np.zeros(hist_len, np.int64)
    bulk_hist = np.zeros(K + 1, np.int64)
    departures = 0
    arrivals = 0
    delivered_all = 0
    rec_cap = 1024 if record else 1
    rec_arr = np.empty(rec_cap, np.int64)
    rec_delay = np.empty(rec_cap, np.int64)
    nrec = 0
    span = max(slots - warmup, 1)

    t = 0
    while t < slots:
        # arrival
        if arr_rng.random() < lam:
            if qlen == cap:
                grown = np.empty(2 * cap, np.int64)
                for i in range(qlen):
                    grown[i] = qbuf[(head + i) % cap]
                qbuf = grown
                head = 0
                cap *= 2
            qbuf[(head + qlen) % cap] = t
            qlen += 1
            arrivals += 1
        success = ch_rng.random() < q
        # bulk selection moment: record the departure-epoch queue length
        if pending:
            if t - 1 >= warmup:
                dep_hist[min(qlen, hist_len - 1)] += 1
                departures += 1
            pending = False
            if max_departures > 0 and departures >= max_departures:
                break
        if not busy and qlen > 0:
            k = min(qlen, K)
            for i in range(k):
                bulk[i] = qbuf[head]
                head = (head + 1) % cap
            qlen -= k
            rank = 0
            busy = True
            if vector:
                pivot_row[:] = -1
            if t >= warmup:
                bulk_hist[k] += 1
        if busy and success:
            if vector:
                while True:
                    nz = False
                    for j in range(k):
                        coeffs[j] = cf_rng.integers(0, Q)
                        if coeffs[j] != 0:
                            nz = True
                    if nz or (allow_zero_k2 and k >= 2):
                        break
                innovative = _rank_insert(coeffs, k, rank, basis, pivot_row, p, m, Q, exp, log)
            else:
                pr = useful[k, rank]
                innovative = pr >= 1.0 or cf_rng.random() < pr
            if innovative:
                rank += 1
            if rank == k:
                for i in range(k):
                    a = bulk[i]
                    d = t - a + 1
                    delivered_all += 1
                    if a >= warmup:
                        n += 1
                        total += d
                        total_sq += d * d
                        b = (a - warmup) * nbatch // span
                        batch_sum[b] += d
                        batch_cnt[b] += 1
                    if record:
                        if nrec == rec_cap:
                            ra = np.empty(2 * rec_cap, np.int64)
                            rd = np.empty(2 * rec_cap, np.int64)
                            ra[:nrec] = rec_arr
                            rd[:nrec] = rec_delay
                            rec_arr = ra
                            rec_delay = rd
                            rec_cap *= 2
                        rec_arr[nrec] = a
                        rec_delay[nrec] = d
                        nrec += 1
                busy = False
                pending = True
        t += 1

    in_system = qlen + (k if busy else 0)
    counts = np.array([n, departures, arrivals, delivered_all, in_system, t], np.int64)
    return (counts, total, total_sq, batch_sum, batch_cnt, dep_hist, bulk_hist,
            rec_arr[:nrec].copy(), rec_delay[:nrec].copy())
