"""Command-line harness: run scenarios, refinement studies, and audits.

Exit codes: 0 success, 2 validation/configuration failure, 3 solver
rejection (partial artifacts are still written).
"""

import argparse
import json
import os
import sys

from .energy import EnergyReport, evaluate_W5, load_audit_json
from .errors import AdvanceAborted, ConfigurationError, DomainError, StructureError
from .scenario import PRESETS, Scenario, refine, run_scenario


def _fmt(value):
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_run_artifacts(outdir, result):
    os.makedirs(outdir, exist_ok=True)
    result.scenario.to_json(os.path.join(outdir, "scenario.json"))
    traj = result.trajectory
    _write_csv(
        os.path.join(outdir, "trajectory.csv"),
        ("t", "mass", "min_rho", "max_rho", "eps_grad_rho_sq", "ledger_residual"),
        traj.density_csv_rows(),
    )
    if result.energy_report is not None:
        _write_csv(
            os.path.join(outdir, "energy.csv"),
            EnergyReport.CSV_FIELDS,
            [r.csv_row() for r in result.energy_report.per_step],
        )
    if result.relative_trace is not None:
        _write_csv(
            os.path.join(outdir, "relative.csv"),
            ("t", "relative_energy", "envelope", "rr5_slack"),
            result.relative_trace.csv_rows(),
        )
    traj.save_checkpoints(os.path.join(outdir, "checkpoints.jsonl"))
    with open(os.path.join(outdir, "summary.json"), "w") as fh:
        json.dump(result.summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_scenario(args):
    if args.scenario:
        sc = Scenario.from_json(args.scenario)
    elif args.preset:
        sc = Scenario.preset(args.preset)
    else:
        raise ConfigurationError("provide --scenario PATH or --preset NAME")
    for item in args.override or []:
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} is not KEY=VALUE")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        sc.override(key, value)
    return sc


def _cmd_run(args):
    sc = _load_scenario(args)
    try:
        result = run_scenario(sc)
    except AdvanceAborted as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        if args.out and exc.partial is not None:
            os.makedirs(args.out, exist_ok=True)
            sc.to_json(os.path.join(args.out, "scenario.json"))
            _write_csv(
                os.path.join(args.out, "trajectory.csv"),
                ("t", "mass", "min_rho", "max_rho", "eps_grad_rho_sq", "ledger_residual"),
                exc.partial.density_csv_rows(),
            )
            exc.partial.save_checkpoints(os.path.join(args.out, "checkpoints.jsonl"))
            with open(os.path.join(args.out, "summary.json"), "w") as fh:
                json.dump(
                    {"aborted": True, "reason": str(exc)}, fh, indent=2, sort_keys=True
                )
                fh.write("\n")
        return 3
    if args.out:
        _write_run_artifacts(args.out, result)
    status = "pass" if result.summary.get("passed") else "FAIL"
    print(f"scenario {result.summary['name']}: {status}")
    for name, blk in result.summary["checks"].items():
        print(f"  {name}: {blk}")
    return 0


def _cmd_refine(args):
    sc = _load_scenario(args)
    try:
        rows, orders = refine(sc, args.axis, args.levels)
    except AdvanceAborted as exc:
        print(f"refinement aborted: {exc}", file=sys.stderr)
        return 3
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        header = list(rows[0].keys())
        table = [[row.get(k, "") for k in header] for row in rows]
        _write_csv(os.path.join(args.out, f"refine_{args.axis}.csv"), header, table)
        with open(os.path.join(args.out, "orders.json"), "w") as fh:
            json.dump(orders, fh, indent=2, sort_keys=True)
            fh.write("\n")
    for row in rows:
        print(row)
    if orders:
        print("observed orders (log2 ratios):", orders)
    return 0


def _cmd_audit(args):
    fields = load_audit_json(args.fields)
    report = evaluate_W5(fields)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write_csv(
            os.path.join(args.out, "audit.csv"),
            report.CSV_FIELDS,
            [report.csv_row()],
        )
        with open(os.path.join(args.out, "audit_summary.json"), "w") as fh:
            json.dump(
                {
                    "slack": report.slack,
                    "flagged_rows": report.flagged_rows,
                    "passed": bool(report.slack >= -1e-8 and not report.flagged_rows),
                },
                fh,
                indent=2,
                sort_keys=True,
            )
            fh.write("\n")
    print(f"W5 slack: {report.slack:.6e} (flagged rows: {len(report.flagged_rows)})")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="baroflow",
        description="Barotropic viscous flow simulator and inequality verifier",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a scenario and write artifacts")
    run_p.add_argument("--scenario", help="path to a scenario JSON file")
    run_p.add_argument("--preset", choices=sorted(PRESETS), help="built-in scenario")
    run_p.add_argument("--out", help="output directory")
    run_p.add_argument("--override", action="append", metavar="KEY=VALUE")
    run_p.set_defaults(func=_cmd_run)

    ref_p = sub.add_parser("refine", help="rerun a scenario along one axis")
    ref_p.add_argument("--scenario")
    ref_p.add_argument("--preset", choices=sorted(PRESETS))
    ref_p.add_argument("--out")
    ref_p.add_argument("--override", action="append", metavar="KEY=VALUE")
    ref_p.add_argument("--axis", required=True, choices=("dt", "m", "n", "eps", "delta"))
    ref_p.add_argument("--levels", type=int, default=3)
    ref_p.set_defaults(func=_cmd_refine)

    audit_p = sub.add_parser("audit", help="evaluate the energy inequality on files")
    audit_p.add_argument("--fields", required=True, help="audit JSON file")
    audit_p.add_argument("--out")
    audit_p.set_defaults(func=_cmd_audit)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, DomainError, StructureError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
