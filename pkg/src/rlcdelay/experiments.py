"""Delay-versus-arrival-rate sweeps and the two figure presets."""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .analytics import (
    ChannelParams,
    delay_finite_lower,
    delay_infinite_exact,
    delay_littles_approx,
    mean_queue_at_departure,
    retransmission_delay,
    stability_threshold,
    stationary_boundary,
)
from .errors import IOFailure, NumericallyDegenerate, RootCountMismatch, UnstableQueue
from .gf import BAD, GOOD, field_make
from .service import model_family
from .simulator import RANK_MARKOV, RETRANSMISSION, RLC, ProtocolConfig, SimConfig, simulate

CSV_HEADER = [
    "curve", "source", "protocol", "K", "field", "coding_mode", "q", "lambda",
    "slots", "seed", "mean_delay", "ci95", "delivered", "analytic_value", "status",
]

SOURCES = ("eq1", "eq4", "eq8", "lower", "sim")
_SOURCE_ALIASES = {f"analytic_{s}": s for s in SOURCES[:4]} | {"simulate": "sim"}

SCALES = {"desk": (25, 10**6), "full": (100, 10**7)}


@dataclass(frozen=True)
class CurveSpec:
    source: str
    protocol: str = RLC
    K: int = 1
    field: str = "inf"
    mode: str = GOOD
    fidelity: str = RANK_MARKOV
    name: str | None = None

    def __post_init__(self):
        src = _SOURCE_ALIASES.get(self.source, self.source)
        if src not in SOURCES:
            raise ValueError(f"unknown curve source {self.source!r}")
        object.__setattr__(self, "source", src)
        object.__setattr__(self, "field", str(field_make(self.field).name))
        if src == "eq8":  # exact formula exists only for the infinite field
            object.__setattr__(self, "field", "inf")
            object.__setattr__(self, "mode", GOOD)
        if self.protocol not in (RETRANSMISSION, RLC):
            raise ValueError(f"unknown protocol {self.protocol!r}")
        if src == "eq1" or self.protocol == RETRANSMISSION:
            object.__setattr__(self, "K", 1)
        if self.name is None:
            object.__setattr__(self, "name", self.default_name())

    def default_name(self):
        if self.source == "eq1" or self.protocol == RETRANSMISSION:
            return f"retx-{self.source}"
        return f"{self.source}-K{self.K}-F{self.field}-{self.mode}"

    def protocol_config(self):
        if self.protocol == RETRANSMISSION:
            return ProtocolConfig.retransmission()
        fidelity = self.fidelity if self.field != "inf" else RANK_MARKOV
        return ProtocolConfig.rlc(self.K, field_make(self.field), self.mode, fidelity)

    def threshold(self, q):
        if self.source in ("eq1", "eq8") or self.protocol == RETRANSMISSION:
            return q
        return stability_threshold(q, self.K, field_make(self.field), self.mode)


@dataclass(frozen=True)
class SweepSpec:
    q: float
    curves: tuple
    lambda_min: float = 0.0
    lambda_max: float | None = None
    lambda_steps: int = 100
    slots: int = 10**7
    warmup_slots: int = 10**5
    master_seed: int = 0
    out: str | None = None
    workers: int = 1

    def lambda_grid(self):
        """Evenly spaced arrival rates.

        Without ``lambda_max``, a sweep containing a simulated curve runs up
        to q so saturation shows; a purely analytic sweep stays strictly
        below the smallest stability threshold of its curves.
        """
        n = self.lambda_steps
        if self.lambda_max is not None:
            hi = self.lambda_max
        elif any(c.source == "sim" for c in self.curves):
            hi = self.q
        else:
            hi = min(c.threshold(self.q) for c in self.curves) * n / (n + 1)
        lo = self.lambda_min if self.lambda_min > 0 else hi / n
        return np.linspace(lo, hi, n)


def point_seed(master_seed, curve_index, lambda_index):
    """Per-point seed; independent of execution order and worker count."""
    return int(np.random.SeedSequence([master_seed, curve_index, lambda_index]).generate_state(1, np.uint64)[0])


def analytic_value(curve, q, lam):
    params = ChannelParams(q, lam)
    K, F = curve.K, field_make(curve.field)
    if curve.source == "eq1":
        return retransmission_delay(params)[1]
    if curve.source == "eq8":
        return delay_infinite_exact(params, K)
    if curve.source == "lower":
        return delay_finite_lower(params, K, F, curve.mode)
    b = stationary_boundary(params, K, model_family(q, F, K, curve.mode))
    return delay_littles_approx(mean_queue_at_departure(b), lam)


def _row(curve, q, lam, **kw):
    row = dict.fromkeys(CSV_HEADER, "")
    row.update(
        curve=curve.name,
        source=curve.source,
        protocol="retx" if curve.protocol == RETRANSMISSION else "rlc",
        K=curve.K,
        field=curve.field,
        coding_mode=curve.mode,
        q=f"{q:.6g}",
        **{"lambda": f"{lam:.6g}"},
    )
    row.update(kw)
    return row


def _sim_job(job):
    curve, q, lam, slots, warmup, seed = job
    stats = simulate(curve.protocol_config(), SimConfig(lam, q, slots=slots, warmup_slots=warmup, seed=seed))
    return stats.mean_delay, stats.ci95_halfwidth, stats.delivered


def _map(fn, jobs, workers):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs, chunksize=1))
    return [fn(j) for j in jobs]


def sweep_rows(spec):
    """Compute every (curve, lambda) row, sorted by curve name then lambda."""
    grid = spec.lambda_grid()
    rows, jobs, sim_rows = [], [], []
    for ci, curve in enumerate(spec.curves):
        threshold = curve.threshold(spec.q)
        for li, lam in enumerate(grid):
            if curve.source == "sim":
                seed = point_seed(spec.master_seed, ci, li)
                jobs.append((curve, spec.q, float(lam), spec.slots, spec.warmup_slots, seed))
                status = "ok" if lam < threshold else "unstable"
                sim_rows.append(_row(curve, spec.q, lam, slots=spec.slots, seed=seed, status=status))
                continue
            try:
                value = analytic_value(curve, spec.q, float(lam))
                rows.append(_row(curve, spec.q, lam, analytic_value=f"{value:.10g}", status="ok"))
            except (UnstableQueue, RootCountMismatch, NumericallyDegenerate):
                rows.append(_row(curve, spec.q, lam, status="unstable"))
    for row, (mean, ci, delivered) in zip(sim_rows, _map(_sim_job, jobs, spec.workers)):
        row.update(mean_delay=f"{mean:.10g}", ci95=f"{ci:.6g}", delivered=delivered)
        rows.append(row)
    rows.sort(key=lambda r: (r["curve"], float(r["lambda"])))
    return rows


def rows_to_csv(rows):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_HEADER, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def _write(path, text):
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from exc


def run_sweep(spec):
    """Write the sweep CSV to ``spec.out`` (if set) and return the rows."""
    rows = sweep_rows(spec)
    if spec.out:
        _write(spec.out, rows_to_csv(rows))
    return rows


def gnuplot_blocks(rows):
    """One data block per curve, separated for gnuplot's ``index``: lambda, delay, ci95."""
    blocks = {}
    for r in rows:
        value = r["analytic_value"] or r["mean_delay"] or "NaN"
        blocks.setdefault(r["curve"], []).append(f"{r['lambda']} {value} {r['ci95'] or 0} {r['status']}")
    return "\n\n\n".join(
        f"# {name}\n# lambda delay ci95 status\n" + "\n".join(lines) for name, lines in blocks.items()
    ) + "\n"


def figure_curves(q, Ks=(2, 4), fidelity=RANK_MARKOV):
    curves = [CurveSpec("eq1", RETRANSMISSION), CurveSpec("sim", RETRANSMISSION)]
    for K in Ks:
        curves += [
            CurveSpec("eq4", K=K, field="inf"),
            CurveSpec("eq4", K=K, field="2", mode=BAD),
            CurveSpec("eq8", K=K, field="inf"),
        ]
        for F in ("2", "16"):
            for mode in (BAD, GOOD):
                curves.append(CurveSpec("sim", K=K, field=F, mode=mode, fidelity=fidelity))
    return tuple(curves)


FIGURES = {"fig2": 0.5, "fig3": 0.9}


def figure_spec(which, scale="desk", master_seed=0, workers=1, Ks=(2, 4), fidelity=RANK_MARKOV):
    if which not in FIGURES:
        raise ValueError(f"unknown figure {which!r}; choose from {sorted(FIGURES)}")
    steps, slots = SCALES[scale]
    q = FIGURES[which]
    return SweepSpec(
        q=q, curves=figure_curves(q, Ks, fidelity), lambda_steps=steps, slots=slots,
        master_seed=master_seed, workers=workers,
    )


def reproduce_figure(which, scale="desk", out_dir=".", master_seed=0, workers=1, Ks=(2, 4)):
    """Write ``<which>_<scale>.csv``, a gnuplot ``.dat`` file and a manifest."""
    spec = figure_spec(which, scale, master_seed, workers, Ks)
    base = Path(out_dir) / f"{which}_{scale}"
    spec = replace(spec, out=str(base.with_suffix(".csv")))
    rows = run_sweep(spec)
    _write(base.with_suffix(".dat"), gnuplot_blocks(rows))
    _write(base.with_suffix(".manifest.json"), manifest(spec))
    return rows


def manifest(spec):
    data = asdict(spec)
    data["curves"] = [asdict(c) for c in spec.curves]
    data["lambda_grid"] = [float(x) for x in spec.lambda_grid()]
    data["point_seeds"] = {
        c.name: [point_seed(spec.master_seed, ci, li) for li in range(spec.lambda_steps)]
        for ci, c in enumerate(spec.curves)
        if c.source == "sim"
    }
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def saturation_points(rows, wall=100.0):
    """First lambda at which each simulated curve's mean delay exceeds ``wall``."""
    out = {}
    for r in rows:
        if r["source"] != "sim" or r["curve"] in out:
            continue
        if r["mean_delay"] and float(r["mean_delay"]) > wall:
            out[r["curve"]] = float(r["lambda"])
    for r in rows:
        if r["source"] == "sim":
            out.setdefault(r["curve"], float("inf"))
    return out


def default_workers():
    return max(1, (os.cpu_count() or 1))
