"""Slotted simulation of retransmission and RLC(K, F) on an erasure channel.

Each slot runs four steps in order:

1. arrival: with probability ``lam`` a packet joins the queue, stamped with
   the current slot;
2. bulk formation: an idle server with a nonempty queue takes the first
   ``min(len(queue), K)`` packets;
3. transmission: one coded packet is sent and survives with probability q;
   a surviving packet is innovative according to the fidelity in use;
4. completion: once the rank reaches the bulk size every packet in the bulk
   is delivered with delay ``slot - arrival_slot + 1``.

The queue length seen at step 2 of the slot after a completion is the
departure-epoch sample (the embedded chain S_t).  Arrivals, channel
outcomes and coefficients come from three independent PCG64 streams split
from one master seed; arrival and channel draws happen every slot, busy or
not, so two protocols fed the same seeds see the same sample paths.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import CouplingViolation
from .gf import BAD, CODING_MODES, GOOD, INFINITE, RankState, field_make, sample_coefficients
from .service import useful_probability

RETRANSMISSION = "retransmission"
RLC = "rlc"
VECTOR_EXACT = "vector_exact"
RANK_MARKOV = "rank_markov"


@dataclass(frozen=True)
class ProtocolConfig:
    kind: str = RLC
    K: int = 1
    field: object = INFINITE
    mode: str = GOOD
    fidelity: str = RANK_MARKOV

    def __post_init__(self):
        if self.kind not in (RETRANSMISSION, RLC):
            raise ValueError(f"unknown protocol kind {self.kind!r}")
        if self.kind == RLC:
            if self.K < 1:
                raise ValueError("K must be at least 1")
            if self.mode not in CODING_MODES:
                raise ValueError(f"coding mode must be one of {CODING_MODES}")
            if self.fidelity not in (VECTOR_EXACT, RANK_MARKOV):
                raise ValueError(f"unknown fidelity {self.fidelity!r}")
            if self.fidelity == VECTOR_EXACT and self.field.is_infinite:
                raise ValueError("vector_exact fidelity needs a concrete field")

    @classmethod
    def retransmission(cls):
        return cls(kind=RETRANSMISSION)

    @classmethod
    def rlc(cls, K, field=INFINITE, mode=GOOD, fidelity=RANK_MARKOV):
        return cls(RLC, K, field_make(field) if not hasattr(field, "is_infinite") else field, mode, fidelity)

    @property
    def max_bulk(self):
        return 1 if self.kind == RETRANSMISSION else self.K

    @property
    def is_vector(self):
        return self.kind == RLC and self.fidelity == VECTOR_EXACT

    def useful_table(self):
        """``table[k, r]``: probability a received packet raises rank r of a size-k bulk."""
        K = self.max_bulk
        table = np.zeros((K + 1, K + 1))
        for k in range(1, K + 1):
            for r in range(k):
                if self.kind == RETRANSMISSION:
                    table[k, r] = 1.0
                else:
                    table[k, r] = useful_probability(self.field, k, r, self.mode)
        return table

    def label(self):
        if self.kind == RETRANSMISSION:
            return "retx"
        return f"rlc(K={self.K},F={self.field.name},{self.mode},{self.fidelity})"


@dataclass(frozen=True)
class SimConfig:
    lam: float
    q: float
    slots: int = 10**7
    warmup_slots: int = 10**5
    seed: int = 0
    batches: int = 32
    stop_after_departures: int | None = None
    record_delays: bool = False
    histogram_length: int = 64

    def __post_init__(self):
        if not 0 <= self.lam <= 1:
            raise ValueError("lambda must lie in [0, 1]")
        if not 0 < self.q <= 1:
            raise ValueError("q must lie in (0, 1]")
        if not 0 <= self.warmup_slots < self.slots:
            raise ValueError("warmup_slots must be smaller than slots")

    def streams(self):
        """Independent (arrivals, channel, coefficients) generators."""
        return split_streams(self.seed)


def split_streams(seed, n=3):
    children = np.random.SeedSequence(seed).spawn(n)
    return tuple(np.random.Generator(np.random.PCG64(c)) for c in children)


@dataclass(frozen=True)
class SimStats:
    delivered: int
    mean_delay: float
    delay_variance: float
    ci95_halfwidth: float
    stderr: float
    departure_queue_histogram: np.ndarray = field(repr=False)
    bulk_size_histogram: np.ndarray = field(repr=False)
    departures: int = 0
    arrivals: int = 0
    delivered_total: int = 0
    in_system: int = 0
    slots_run: int = 0
    arrival_slots: np.ndarray | None = field(default=None, repr=False)
    delays: np.ndarray | None = field(default=None, repr=False)

    def departure_distribution(self):
        h = self.departure_queue_histogram
        return h / h.sum() if h.sum() else h.astype(float)

    def bulk_size_distribution(self):
        h = self.bulk_size_histogram[1:]
        return h / h.sum() if h.sum() else h.astype(float)


def _batch_stderr(batch_sum, batch_cnt):
    keep = batch_cnt > 0
    if keep.sum() < 2:
        return math.nan
    means = batch_sum[keep] / batch_cnt[keep]
    return float(np.std(means, ddof=1) / np.sqrt(keep.sum()))


def simulate(protocol, sim):
    """Run one simulation; identical configs give identical stats."""
    from ._kernel import run_slots

    arr_rng, ch_rng, cf_rng = sim.streams()
    gf = protocol.field if protocol.is_vector else None
    exp = gf.exp if gf else np.zeros(2, np.int64)
    log = gf.log if gf else np.zeros(2, np.int64)
    out = run_slots(
        arr_rng, ch_rng, cf_rng,
        float(sim.lam), float(sim.q), protocol.max_bulk, protocol.useful_table(),
        protocol.is_vector, protocol.mode == BAD,
        gf.order if gf else 2, gf.characteristic if gf else 2, gf.degree if gf else 1,
        np.ascontiguousarray(exp), np.ascontiguousarray(log),
        int(sim.slots), int(sim.warmup_slots), int(sim.batches),
        int(sim.stop_after_departures or 0), int(sim.histogram_length), bool(sim.record_delays),
    )
    counts, total, total_sq, batch_sum, batch_cnt, dep_hist, bulk_hist, rec_arr, rec_delay = out
    n, departures, arrivals, delivered_all, in_system, slots_run = (int(c) for c in counts)
    mean = total / n if n else math.nan
    var = (total_sq - n * mean * mean) / (n - 1) if n > 1 else math.nan
    se = _batch_stderr(batch_sum, batch_cnt)
    return SimStats(
        delivered=n,
        mean_delay=mean,
        delay_variance=var,
        ci95_halfwidth=1.96 * se,
        stderr=se,
        departure_queue_histogram=dep_hist,
        bulk_size_histogram=bulk_hist,
        departures=departures,
        arrivals=arrivals,
        delivered_total=delivered_all,
        in_system=in_system,
        slots_run=slots_run,
        arrival_slots=rec_arr if sim.record_delays else None,
        delays=rec_delay if sim.record_delays else None,
    )


def empirical_departure_distribution(protocol, sim):
    """Normalized histogram of queue length at departure epochs."""
    return simulate(protocol, sim).departure_distribution()


class SlotStepper:
    """Readable one-slot-at-a-time model of a single sender.

    The caller draws arrival and channel outcomes so that several steppers
    can share sample paths; coefficient draws use ``coef_rng``.
    """

    def __init__(self, protocol, coef_rng=None):
        self.protocol = protocol
        self.coef_rng = coef_rng
        self.useful = protocol.useful_table()
        self.queue = deque()  # (packet_id, arrival_slot)
        self.bulk = []
        self.rank = 0
        self.rank_state = None
        self.delivered = []  # (packet_id, arrival_slot, delay)
        self.arrivals = 0
        self.completed_last_slot = False

    @property
    def busy(self):
        return bool(self.bulk)

    def in_system(self):
        return len(self.queue) + len(self.bulk)

    def arrive(self, t, arrived):
        if arrived:
            self.queue.append((self.arrivals, t))
            self.arrivals += 1

    def serve(self, t, success):
        """Bulk formation, transmission and completion for slot t."""
        self.completed_last_slot = False
        if not self.bulk and self.queue:
            k = min(len(self.queue), self.protocol.max_bulk)
            self.bulk = [self.queue.popleft() for _ in range(k)]
            self.rank = 0
            if self.protocol.is_vector:
                self.rank_state = RankState(self.protocol.field, k)
        if not (self.bulk and success):
            return []
        k = len(self.bulk)
        if self.protocol.is_vector:
            v = sample_coefficients(self.protocol.field, k, self.protocol.mode, self.coef_rng)
            innovative = self.rank_state.update(v)
        else:
            pr = self.useful[k, self.rank]
            innovative = pr >= 1.0 or self.coef_rng.random() < pr
        if innovative:
            self.rank += 1
        if self.rank < k:
            return []
        done = [(pid, a, t - a + 1) for pid, a in self.bulk]
        self.delivered.extend(done)
        self.bulk = []
        self.completed_last_slot = True
        return done


def run_stepper(protocol, sim):
    """Pure-Python run returning the per-packet (arrival_slot, delay) list."""
    arr_rng, ch_rng, cf_rng = sim.streams()
    s = SlotStepper(protocol, cf_rng)
    for t in range(sim.slots):
        s.arrive(t, arr_rng.random() < sim.lam)
        success = ch_rng.random() < sim.q
        s.serve(t, success)
    return s


@dataclass
class CouplingReport:
    K: int
    slots: int
    moments_checked: int = 0
    violations: list = field(default_factory=list)  # (slot, claim, detail)

    @property
    def ok(self):
        return not self.violations


def coupled_run(shared_L_seed, shared_C_seed, K, slots, q=0.5, lam=0.25, perturb_slot=None, strict=True):
    """Run retransmission and RLC(K, inf) on one arrival and one channel path.

    At every bulk selection moment of the RLC copy the three coupling claims
    are checked: the retransmission copy has nothing in service, both have
    delivered the same packets, and both queues hold the same packets with
    the same ages.  ``perturb_slot`` is a checker self-test: the RLC copy
    gets one extra successful reception at the first erased slot
    >= perturb_slot in which it transmits, so it finishes that bulk before
    retransmission can.
    """
    arr_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(shared_L_seed)))
    ch_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(shared_C_seed)))
    retx = SlotStepper(ProtocolConfig.retransmission())
    rlc = SlotStepper(ProtocolConfig.rlc(K, INFINITE))
    report = CouplingReport(K, slots)
    retx_done = rlc_done = 0
    flipped = perturb_slot is None
    for t in range(slots):
        arrived = arr_rng.random() < lam
        success = ch_rng.random() < q
        retx.arrive(t, arrived)
        rlc.arrive(t, arrived)
        if t == 0 or rlc.completed_last_slot:
            report.moments_checked += 1
            if retx.busy:
                report.violations.append((t, 1, "retransmission has a packet in service"))
            # sets agreed at the previous moment, so comparing increments suffices
            new_retx = {d[0] for d in retx.delivered[retx_done:]}
            new_rlc = {d[0] for d in rlc.delivered[rlc_done:]}
            retx_done, rlc_done = len(retx.delivered), len(rlc.delivered)
            if new_retx != new_rlc:
                report.violations.append((t, 2, f"delivered {retx_done} vs {rlc_done} packets"))
                retx_done = rlc_done = 0  # fall back to full comparison from here on
            if list(retx.queue) != list(rlc.queue):
                report.violations.append((t, 3, "queue contents or waiting ages differ"))
        rlc_success = success
        if not flipped and t >= perturb_slot and not success and (rlc.busy or rlc.queue):
            rlc_success = flipped = True
        retx.serve(t, success)
        rlc.serve(t, rlc_success)
    if strict and report.violations:
        raise CouplingViolation(f"{len(report.violations)} coupling violations", report.violations)
    return report
