"""Command-line entry point: ``rlcdelay {sweep,figure,analytic,validate}``.

Exit status is 0 on success, 1 when ``validate`` finds a failing check and
2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time

import numpy as np

from . import analytics
from .analytics import ChannelParams, delay_report
from .errors import CouplingViolation, RlcDelayError
from .experiments import SCALES, CurveSpec, SweepSpec, reproduce_figure, rows_to_csv, run_sweep
from .gf import field_make
from .service import model_family
from .simulator import (
    RANK_MARKOV,
    RETRANSMISSION,
    RLC,
    VECTOR_EXACT,
    ProtocolConfig,
    SimConfig,
    coupled_run,
    simulate,
)

log = logging.getLogger("rlcdelay")

_PROTOCOLS = {"retx": RETRANSMISSION, "rlc": RLC}
_FIDELITIES = {"vector": VECTOR_EXACT, "markov": RANK_MARKOV}


def _csv_list(kind):
    def parse(text):
        try:
            return [kind(x) for x in text.split(",") if x]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None

    return parse


def _field_list(text):
    out = []
    for x in text.split(","):
        try:
            out.append(field_make(x).name)
        except RlcDelayError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    return out


def build_parser():
    parser = argparse.ArgumentParser(prog="rlcdelay", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def protocol_flags(p, many):
        p.add_argument("--q", type=float, default=0.5)
        p.add_argument("--K", type=_csv_list(int) if many else int, default=[4] if many else 4)
        p.add_argument("--field", type=_field_list if many else str, default=["inf"] if many else "inf")
        coding = _csv_list(str) if many else str
        p.add_argument("--coding", type=coding, default=["good"] if many else "good")

    sw = sub.add_parser("sweep", help="delay versus lambda for one or more curves")
    protocol_flags(sw, many=True)
    sw.add_argument("--lambda-min", type=float, default=0.0)
    sw.add_argument("--lambda-max", type=float, default=None)
    sw.add_argument("--steps", type=int, default=100)
    sw.add_argument("--protocol", choices=sorted(_PROTOCOLS), default="rlc")
    sw.add_argument("--source", type=_csv_list(str), default=["sim"], help="eq1,eq4,eq8,lower,sim")
    sw.add_argument("--fidelity", choices=sorted(_FIDELITIES), default="markov")
    sw.add_argument("--slots", type=int, default=10**7)
    sw.add_argument("--warmup", type=int, default=10**5)
    sw.add_argument("--seed", type=int, default=0)
    sw.add_argument("--workers", type=int, default=1)
    sw.add_argument("--out", default=None, help="CSV path (stdout when omitted)")

    fig = sub.add_parser("figure", help="reproduce a delay figure preset")
    fig.add_argument("which", choices=["fig2", "fig3"])
    fig.add_argument("--scale", choices=sorted(SCALES), default="desk")
    fig.add_argument("--K", type=_csv_list(int), default=[2, 4])
    fig.add_argument("--seed", type=int, default=0)
    fig.add_argument("--workers", type=int, default=1)
    fig.add_argument("--out", default=".", help="output directory")

    an = sub.add_parser("analytic", help="all closed-form quantities at one operating point")
    protocol_flags(an, many=False)
    an.add_argument("--lambda", dest="lam", type=float, required=True)

    va = sub.add_parser("validate", help="quick oracle and coupling checks")
    va.add_argument("--slots", type=int, default=10**6)
    va.add_argument("--seed", type=int, default=0)
    return parser


def _sweep(args):
    curves = []
    for source in args.source:
        if args.protocol == "retx" or source == "eq1":
            curves.append(CurveSpec(source, RETRANSMISSION))
            continue
        for K in args.K:
            for F in args.field:
                for mode in args.coding:
                    curves.append(CurveSpec(source, RLC, K, F, mode, _FIDELITIES[args.fidelity]))
    curves = tuple(dict.fromkeys(curves))
    spec = SweepSpec(
        q=args.q, curves=curves, lambda_min=args.lambda_min, lambda_max=args.lambda_max,
        lambda_steps=args.steps, slots=args.slots, warmup_slots=args.warmup,
        master_seed=args.seed, out=args.out, workers=args.workers,
    )
    rows = run_sweep(spec)
    if args.out is None:
        sys.stdout.write(rows_to_csv(rows))
    return 0


def _figure(args):
    start = time.time()
    rows = reproduce_figure(args.which, args.scale, args.out, args.seed, args.workers, tuple(args.K))
    log.info("%s/%s: %d rows in %.1fs", args.which, args.scale, len(rows), time.time() - start)
    return 0


def _analytic(args):
    rep = delay_report(ChannelParams(args.q, args.lam), args.K, field_make(args.field), args.coding)
    data = {k: v for k, v in vars(rep).items() if k != "field"}
    data["field"] = rep.field.name
    print(json.dumps(data, indent=2))
    return 0


def validate(slots=10**6, seed=0, out=print):
    """Run the quick oracle suite; return the list of failed check names."""
    failed = []

    def check(name, ok, detail):
        out(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        if not ok:
            failed.append(name)

    for q, lam in ((0.5, 0.25), (0.9, 0.45)):
        params = ChannelParams(q, lam)
        s = simulate(ProtocolConfig.retransmission(), SimConfig(lam, q, slots=slots, seed=seed))
        want = analytics.retransmission_delay(params)[1]
        check(f"retx q={q} lam={lam}", abs(s.mean_delay - want) <= 3 * s.stderr, f"sim {s.mean_delay:.4f} vs {want:.4f}")
        s = simulate(ProtocolConfig.rlc(4), SimConfig(lam, q, slots=slots, seed=seed))
        want = analytics.delay_infinite_exact(params, 4)
        check(f"rlc4 q={q} lam={lam}", abs(s.mean_delay - want) <= 3 * s.stderr, f"sim {s.mean_delay:.4f} vs {want:.4f}")
        b = analytics.stationary_boundary(params, 2, model_family(q, field_make("inf"), 2))
        emp = simulate(ProtocolConfig.rlc(2), SimConfig(lam, q, slots=slots, seed=seed)).departure_distribution()
        tv = 0.5 * np.abs(np.r_[emp[:2], emp[2:].sum()] - np.r_[b.boundary, b.tail]).sum()
        check(f"boundary K=2 q={q} lam={lam}", tv < 0.01, f"TV {tv:.4f}")
    for K in (1, 2, 4):
        try:
            rep = coupled_run(seed, seed + 1, K, min(slots, 2 * 10**5))
            check(f"coupling K={K}", rep.ok, f"{rep.moments_checked} moments")
        except CouplingViolation as exc:
            check(f"coupling K={K}", False, str(exc))
    return failed


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "sweep":
            return _sweep(args)
        if args.command == "figure":
            return _figure(args)
        if args.command == "analytic":
            return _analytic(args)
        return 1 if validate(args.slots, args.seed) else 0
    except (RlcDelayError, ValueError) as exc:
        parser.exit(2, f"rlcdelay: error: {exc}\n")


if __name__ == "__main__":
    sys.exit(main())
