"""Command line entry point.

Exit codes: 0 on success, 1 when ``check`` finds incompatible data, 2 for
bad input (missing file, schema or parameter violation), 3 when the
numerics fail (no contraction, singular solve, folded mesh).
"""

import argparse
import csv
import io as _io
import sys
from pathlib import Path

import numpy as np

from .compat import scenario_compatibility
from .errors import ConfigError, ParamError, GeometryError, PreconditionError, SplashError
from .io import dump_json, write_run
from .picard import calibrate
from .scenario import load_scenario, simulate
from .sobolev import product_lemma_probe, time_integration_probe
from .splash import PerturbationFamily, splash_experiment

EXIT_OK, EXIT_INCOMPATIBLE, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def cmd_simulate(args):
    sc = load_scenario(args.scenario)
    record = simulate(sc, t_final=args.t_final)
    path = write_run(record, args.out, scenario=sc)
    print(f"wrote {len(record.snapshots)} snapshots and {path}")
    return EXIT_OK


def cmd_splash(args):
    sc = load_scenario(args.scenario)
    fam = PerturbationFamily(sc, tuple(args.eps), tuple(args.b))
    rep = splash_experiment(fam, t_final=args.t_final, speed_factor=args.speed_factor, workers=args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dump_json(rep, out / "report.json")
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["eps", "t_star", "sup_gap"])
    for r in rep["rows"]:
        w.writerow([repr(r["eps"]), "" if r["t_star"] is None else repr(r["t_star"]), repr(r["sup_gap"])])
    (out / "report.csv").write_text(buf.getvalue())
    for r in rep["rows"]:
        print(f"eps={r['eps']:g} t_star={r['t_star']} sup_gap={r['sup_gap']:.6g}")
    return EXIT_OK


def cmd_calibrate(args):
    sc = load_scenario(args.scenario)
    rep = calibrate(sc.problem(), args.we, sweeps=args.sweeps, t_hi=args.t_hi)
    dump_json(rep, args.out)
    for r in rep["rows"]:
        print(f"We={r['weissenberg']:g} T_emp={r['t_emp']:.6g}")
    print(f"c_cal={rep['c_cal']:.6g} mu_cal={rep['mu_cal']:g}")
    return EXIT_OK


def cmd_probe(args):
    rng = np.random.default_rng(args.seed)
    prod = product_lemma_probe(trials=args.trials, rng=rng)
    tint = time_integration_probe(rng=rng)
    dump_json({"seed": args.seed, "trials": args.trials, "product": prod, "time_integration": tint}, args.out)
    print(f"product probe: max ratio {max(prod['max_ratio']):.4g}, slope {prod['slope']:.3g}, pass={prod['pass']}")
    print(f"time-integration probe: ratios {['%.4g' % r for r in tint['ratio']]}, pass={tint['pass']}")
    return EXIT_OK


def cmd_check(args):
    sc = load_scenario(args.scenario)
    rep = scenario_compatibility(sc)
    if args.out:
        dump_json(rep, args.out)
    for k, v in rep.items():
        print(f"{k}: {v}")
    return EXIT_OK if rep["pass"] else EXIT_INCOMPATIBLE


def build_parser():
    ap = argparse.ArgumentParser(prog="oldroyd-splash", description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0, help="seed for randomized probes")
    ap.add_argument("--threads", type=int, default=1, help="worker processes for parallel experiments")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a scenario and write snapshots")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--t-final", type=float, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("splash", help="perturbed near-splash family")
    p.add_argument("--scenario", required=True)
    p.add_argument("--eps", type=_floats, default=[0.04, 0.02, 0.01])
    p.add_argument("--b", type=_floats, default=[0.0, -1.0])
    p.add_argument("--t-final", type=float, default=None)
    p.add_argument("--speed-factor", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_splash)

    p = sub.add_parser("calibrate", help="empirical contraction horizon per We")
    p.add_argument("--scenario", required=True)
    p.add_argument("--we", type=_floats, default=[0.1, 1.0, 10.0, 100.0])
    p.add_argument("--sweeps", type=int, default=4)
    p.add_argument("--t-hi", type=float, default=2.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("probe-lemmas", help="empirical Sobolev lemma probes")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("check", help="compatibility report for a scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_check)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ParamError, GeometryError, PreconditionError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except SplashError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
