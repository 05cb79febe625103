"""Command line entry point: ``scs``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import harness, specprog
from .attest import AttestationEvidence, VerifyResult, verify_evidence
from .model import HonestyAssignment
from .protocol import HONEST_SCRIPT, SCRIPT_CATALOG, parse_script


def _write(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def cmd_run(args: argparse.Namespace) -> int:
    data = json.loads(Path(args.scenario).read_text())
    if args.seed is not None:
        data["seed"] = args.seed
    scenario = harness.Scenario.from_dict(data)
    report = harness.run_scenario(scenario)
    _write(report.to_json(), args.out)
    statuses = ", ".join(f"{req.value}={st.to_dict()['status']}" for req, st in report.requirements.items())
    print(f"{scenario.id}: phase={report.final_phase.value} {statuses}", file=sys.stderr)
    return 1 if scenario.assumption_holds and report.violations() else 0


def cmd_enumerate(args: argparse.Namespace) -> int:
    if args.catalog != "default":
        raise SystemExit(f"unknown catalog {args.catalog!r}; only 'default' is available")
    summary, reports = harness.run_case_analysis(seed=args.seed, workers=args.workers)
    _write(json.dumps(summary.to_dict(), indent=1, sort_keys=True), args.out)
    if args.reports_dir:
        out = Path(args.reports_dir)
        out.mkdir(parents=True, exist_ok=True)
        for r in reports:
            (out / f"{r.scenario_id}.json").write_text(r.to_json() + "\n")
    print(
        f"{summary.total} scenarios in {summary.elapsed_s:.1f}s: "
        f"sound={summary.sound} gated={summary.gated} necessary={summary.necessary}",
        file=sys.stderr,
    )
    return 0 if summary.ok else 1


def cmd_verify_evidence(args: argparse.Namespace) -> int:
    try:
        evidence = AttestationEvidence.from_bytes(bytes.fromhex(args.evidence))
        stale = frozenset(bytes.fromhex(n) for n in args.stale_nonce)
        result = verify_evidence(
            evidence, bytes.fromhex(args.scp_pub), bytes.fromhex(args.ap_pub), bytes.fromhex(args.digest), stale
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(result.value)
    return 0 if result is VerifyResult.ACCEPT else 1


def cmd_make_scenario(args: argparse.Namespace) -> int:
    # a role given any script is marked dishonest
    honesty = HonestyAssignment(ap=not args.ap, scp=not args.scp, asp=not args.asp, cp=not args.cp)
    scripts = {}
    for role in harness.MALICIOUS_ROLES:
        name = getattr(args, role.value.lower())
        scripts[role] = parse_script(role, name) if name else HONEST_SCRIPT[role]
    program = specprog.ubi_rank_program(harness.watermark_for(args.seed))
    scenario = harness.Scenario(
        honesty, scripts, program, specprog.ubi_rank_spec(), harness.DEFAULT_DP_INPUTS, args.seed, args.id
    )
    _write(json.dumps(scenario.to_dict(), indent=1, sort_keys=True), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scs", description="Sealed computation trust-establishment simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one scenario file and emit its security report")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("enumerate", help="run every scenario and check the case analysis")
    p.add_argument("--catalog", default="default")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")
    p.add_argument("--reports-dir")
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("verify-evidence", help="check hex-encoded attestation evidence")
    p.add_argument("--evidence", required=True)
    p.add_argument("--scp-pub", required=True)
    p.add_argument("--ap-pub", required=True)
    p.add_argument("--digest", required=True)
    p.add_argument("--stale-nonce", action="append", default=[])
    p.set_defaults(func=cmd_verify_evidence)

    p = sub.add_parser("make-scenario", help="write a scenario file for the demo ranking program")
    p.add_argument("--id", default="scenario")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    for role in harness.MALICIOUS_ROLES:
        names = ", ".join(s.value for s in SCRIPT_CATALOG[role])
        p.add_argument(f"--{role.value.lower()}", metavar="SCRIPT", help=f"one of: {names}")
    p.set_defaults(func=cmd_make_scenario)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
