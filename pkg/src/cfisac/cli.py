"""Command line front end.

    cfisac run   [--config cfg.json] [--preset paper|desk] [--seed N]
                 [--known-aps K] [--jobs J] [--out rows.csv] [--json all.json]
                 [--trace]
    cfisac sweep --kind target|cellsize|knownaps --values v1,v2,...
                 [same options]
"""

import argparse
import dataclasses
import json
import sys

from .harness import ExperimentSpec, emit_csv, run_experiment
from .scenario import default_grid, default_layout, load_config, preset_config

KIND_ALIASES = {
    "target": "target_sweep",
    "cellsize": "cellsize_sweep",
    "knownaps": "knownaps_sweep",
}


def _add_common(p):
    p.add_argument("--config", help="flat JSON config file")
    p.add_argument("--preset", choices=["paper", "desk"], help="base parameter set")
    p.add_argument("--seed", type=int, help="master seed override")
    p.add_argument("--known-aps", type=int, help="APs the adversary knows (default all)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--out", help="CSV output path")
    p.add_argument("--json", dest="json_out", help="JSON mirror (rows + records)")
    p.add_argument("--trace", action="store_true", help="print per-iteration design trace")


def build_parser():
    ap = argparse.ArgumentParser(prog="cfisac", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="single experiment point")
    _add_common(run_p)
    sweep_p = sub.add_parser("sweep", help="sweep one scenario parameter")
    sweep_p.add_argument("--kind", required=True, choices=sorted(KIND_ALIASES))
    sweep_p.add_argument("--values", required=True, help="comma-separated sweep values")
    _add_common(sweep_p)
    return ap


def _load(args):
    if args.config:
        cfg, layout, grid = load_config(args.config)
        if args.preset:
            raise SystemExit("--preset and --config are exclusive; put preset in the file")
    else:
        cfg = preset_config(args.preset or "paper")
        layout, grid = default_layout(cfg.n_tx), default_grid()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg, layout, grid


def main(argv=None):
    args = build_parser().parse_args(argv)
    cfg, layout, grid = _load(args)

    if args.command == "run":
        kind, values = "single", []
    else:
        kind = KIND_ALIASES[args.kind]
        values = [float(v) for v in args.values.split(",") if v.strip()]
        if not values:
            raise SystemExit("no sweep values given")

    exp = ExperimentSpec(
        kind=kind,
        values=values,
        config=cfg,
        layout=layout,
        grid=grid,
        known_aps=args.known_aps,
        jobs=args.jobs,
    )

    def progress(value, q, record):
        if args.trace:
            for t in record.get("trace", []):
                print(
                    "  q=%d it=%d gamma_t=%.4g viol=%.2e rel_w=%.3g rel_u=%.3g"
                    % (q, t["iteration"], t["gamma_t"], t["max_violation"],
                       t["rel_w"], t["rel_u"]),
                    file=sys.stderr,
                )
        status = record["flagged"] or "ok"
        print("value=%s q=%d %s" % (value, q, status), file=sys.stderr)

    rows, records = run_experiment(exp, progress=progress if args.jobs <= 1 else None)

    if args.out:
        emit_csv(rows, args.out)
    if args.json_out:
        payload = {
            "rows": [dataclasses.asdict(r) for r in rows],
            "records": records,
        }
        with open(args.json_out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=1)
    for r in rows:
        print(
            "sweep=%s m_ue=%d n_tx=%d p_d=%s q_used=%d flagged=%d "
            "mean_gamma_t=%.6g mean_min_sinr=%.6g (%.1fs)"
            % (r.sweep_value, r.m_ue, r.n_tx, r.p_d, r.q_used, r.flagged,
               r.mean_gamma_t, r.mean_min_comm_sinr, r.wall_time_s)
        )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
