"""Scenario enumeration, post-hoc requirement checkers and the case analysis.

Checkers look only at what ended up in party transcripts, plus the ground
truth the simulator recorded (the spec, the DP's inputs and the installed
program). Information flow is detected with canaries: high-entropy byte
strings tagging the DP's data, the ASP's program and the container's
memory. A party "knows" the plaintext of any ciphertext in its transcript
whose session key also appears in its transcript.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

from . import channel, container as ct, specprog
from .attest import AttestationEvidence, seed_bytes
from .container import HEADER_SIZE, Message, MessageKind, Response, ResponseStatus
from .model import (
    HonestyAssignment,
    PartyRole,
    Phase,
    SecurityRequirement,
    ViolationEvent,
    all_assignments,
    global_assumption_holds,
)
from .protocol import (
    HONEST_SCRIPT,
    SCRIPT_CATALOG,
    Deployment,
    Script,
    Transcript,
    make_parties,
    parse_script,
)
from .specprog import FunctionalSpec, Program

logger = logging.getLogger(__name__)

WATERMARK_SIZE = 16
MALICIOUS_ROLES = (PartyRole.ASP, PartyRole.SCP, PartyRole.AP, PartyRole.CP)
DEFAULT_DP_INPUTS: tuple[tuple[int, ...], ...] = ((10, 5), (0, 0), (60, 0), (50, 0), (3, 7))


@dataclass(frozen=True)
class Scenario:
    honesty: HonestyAssignment
    scripts: dict
    program: Program
    spec: FunctionalSpec
    dp_inputs: tuple[tuple[int, ...], ...]
    seed: int
    id: str = "scenario"
    magic: bytes = ct.DEFAULT_MAGIC

    def __post_init__(self):
        scripts = {role: self.scripts.get(role, HONEST_SCRIPT[role]) for role in MALICIOUS_ROLES}
        for role, script in scripts.items():
            if script not in SCRIPT_CATALOG[role]:
                raise ValueError(f"{script!r} is not a {role.value} script")
            if self.honesty.is_honest(role) and script != HONEST_SCRIPT[role]:
                raise ValueError(f"honest {role.value} cannot run {script.value}")
        object.__setattr__(self, "scripts", scripts)
        object.__setattr__(self, "dp_inputs", tuple(tuple(x) for x in self.dp_inputs))

    @property
    def assumption_holds(self) -> bool:
        return global_assumption_holds(self.honesty)

    def active_attackers(self) -> frozenset[PartyRole]:
        return frozenset(r for r, s in self.scripts.items() if s != HONEST_SCRIPT[r])

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "honesty": self.honesty.to_dict(),
            "scripts": {r.value.lower(): s.value for r, s in self.scripts.items()},
            "program": specprog.encode(self.program).hex(),
            "spec": self.spec.to_dict(),
            "dp_inputs": [list(x) for x in self.dp_inputs],
            "seed": self.seed,
            "magic": self.magic.hex(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        scripts = {}
        for name, value in data.get("scripts", {}).items():
            role = PartyRole(name.upper())
            scripts[role] = parse_script(role, value)
        return cls(
            honesty=HonestyAssignment.from_dict(data.get("honesty", {})),
            scripts=scripts,
            program=specprog.decode(bytes.fromhex(data["program"])),
            spec=FunctionalSpec.from_dict(data["spec"]),
            dp_inputs=tuple(tuple(x) for x in data.get("dp_inputs", DEFAULT_DP_INPUTS)),
            seed=int(data.get("seed", 0)),
            id=data.get("id", "scenario"),
            magic=bytes.fromhex(data["magic"]) if "magic" in data else ct.DEFAULT_MAGIC,
        )


# -- verdicts ---------------------------------------------------------------


@dataclass(frozen=True)
class Held:
    def to_dict(self) -> dict:
        return {"status": "Held"}


@dataclass(frozen=True)
class Violated:
    event: ViolationEvent

    def to_dict(self) -> dict:
        return {"status": "Violated", **self.event.to_dict()}


@dataclass(frozen=True)
class NotApplicable:
    phase: Phase

    def to_dict(self) -> dict:
        return {"status": "NotApplicable", "phase": self.phase.value}


RequirementStatus = Union[Held, Violated, NotApplicable]


@dataclass
class SecurityReport:
    scenario: Scenario
    final_phase: Phase
    entered_running: bool
    abort_reason: Optional[dict]
    asp_committed_digest: bytes
    published_digest: Optional[bytes]
    installed_program: Optional[Program]
    dp_canary: bytes
    container_canary: bytes
    dp_rounds: list
    evidence_trail: list[AttestationEvidence]
    final_quote: Optional[AttestationEvidence]
    events: list
    transcripts: dict[PartyRole, Transcript]
    requirements: dict[SecurityRequirement, RequirementStatus] = field(default_factory=dict)
    _views: dict = field(default_factory=dict, repr=False)

    def view(self, role: PartyRole) -> list[tuple[str, bytes]]:
        if role not in self._views:
            self._views[role] = plaintext_view(self.transcripts[role])
        return self._views[role]

    @property
    def scenario_id(self) -> str:
        return self.scenario.id

    def violations(self) -> list[ViolationEvent]:
        return [s.event for s in self.requirements.values() if isinstance(s, Violated)]

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario.to_dict(),
            "seed": self.scenario.seed,
            "assumption_holds": self.scenario.assumption_holds,
            "final_phase": self.final_phase.value,
            "entered_running": self.entered_running,
            "abort_reason": self.abort_reason,
            "asp_committed_digest": self.asp_committed_digest.hex(),
            "published_digest": self.published_digest.hex() if self.published_digest else None,
            "installed_program": specprog.encode(self.installed_program).hex() if self.installed_program else None,
            "requirements": {req.value: st.to_dict() for req, st in self.requirements.items()},
            "dp_rounds": [r.to_dict() for r in self.dp_rounds],
            "evidence_trail": [e.hex() for e in self.evidence_trail],
            "final_quote": self.final_quote.hex() if self.final_quote else None,
            "events": [e.line() for e in self.events],
            "transcripts": {role.value: t.to_list() for role, t in self.transcripts.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)


# -- knowledge closure -------------------------------------------------------


def _candidate_keys(t: Transcript) -> list[bytes]:
    keys: set[bytes] = set()
    for entry in t:
        if not entry.label.endswith("<"):
            continue
        data = entry.data
        for i in range(HEADER_SIZE, len(data) - channel.KEY_SIZE + 1):
            keys.add(data[i : i + channel.KEY_SIZE])
    return sorted(keys)


def _try_open(keys: Sequence[bytes], direction: int, seq: int, ciphertext: bytes, aad: bytes) -> Optional[bytes]:
    for key in keys:
        try:
            return channel.open_box(key, direction, seq, ciphertext, aad)
        except channel.ChannelError:
            continue
    return None


def plaintext_view(t: Transcript) -> list[tuple[str, bytes]]:
    """Transcript entries plus every plaintext the party can decrypt on its own."""
    view = [(e.label, e.data) for e in t]
    keys = _candidate_keys(t)
    if not keys:
        return view
    for entry in t:
        try:
            if entry.label.endswith(">"):
                m = Message.from_bytes(entry.data)
                if m.kind not in (MessageKind.DEPLOY_CIPHERTEXT, MessageKind.DATA_UPLOAD):
                    continue
                pt = _try_open(keys, channel.TO_CONTAINER, m.seq, m.body, m.header())
            elif entry.label.endswith("<"):
                r = Response.from_bytes(entry.data)
                if r.status != ResponseStatus.RESULT:
                    continue
                sealed, _ = ct.split_result(r.payload)
                pt = _try_open(keys, channel.FROM_CONTAINER, r.seq, sealed, bytes((ResponseStatus.RESULT,)))
            else:
                continue
        except ValueError:
            continue
        if pt is not None:
            view.append((f"decrypted:{entry.label}", pt))
    return view


def _scan(report: SecurityReport, roles: Iterable[PartyRole], needle: bytes) -> Optional[tuple[PartyRole, bytes]]:
    for role in roles:
        for _, data in report.view(role):
            if needle in data:
                return role, data
    return None


def _violated(report: SecurityReport, req: SecurityRequirement, role: PartyRole, witness: bytes, detail: str) -> Violated:
    return Violated(ViolationEvent(req, witness, role, report.scenario_id, detail))


# -- the four checkers -------------------------------------------------------

NON_DP = (PartyRole.CP, PartyRole.ASP, PartyRole.AP, PartyRole.SCP)


def check_dp_privacy(report: SecurityReport) -> RequirementStatus:
    if not report.entered_running:
        return NotApplicable(report.final_phase)
    hit = _scan(report, NON_DP, report.dp_canary)
    if hit:
        return _violated(report, SecurityRequirement.DP_PRIVACY, hit[0], hit[1], "DP data canary observed")
    program = report.installed_program
    if program is None:
        return Held()
    leaking = [
        k for k, e in enumerate(program.extra_channels) if not specprog.channel_is_constant(e, report.scenario.spec)
    ]
    if not leaking:
        return Held()
    for rnd in report.dp_rounds:
        values = specprog.evaluate(program, rnd.inputs)[1:]
        for role in NON_DP:
            for entry in report.transcripts[role]:
                if entry.label != "fetch<":
                    continue
                try:
                    r = Response.from_bytes(entry.data)
                    if r.status != ResponseStatus.RESULT or r.seq != rnd.fetch_seq:
                        continue
                    _, observed = ct.split_result(r.payload)
                except ValueError:
                    continue
                for k in leaking:
                    if k < len(observed) and observed[k] == values[k]:
                        return _violated(
                            report,
                            SecurityRequirement.DP_PRIVACY,
                            role,
                            entry.data,
                            f"input-dependent channel {k} carries {values[k]} for inputs {list(rnd.inputs)}",
                        )
    return Held()


def check_dp_integrity(report: SecurityReport) -> RequirementStatus:
    if not report.entered_running:
        return NotApplicable(report.final_phase)
    dp = report.transcripts[PartyRole.DP]
    for rnd in report.dp_rounds:
        if rnd.result is None:
            continue
        expected = specprog.spec_evaluate(report.scenario.spec, rnd.inputs)
        if rnd.result != expected:
            witness = next(
                (e.data for e in dp if e.label == "fetch<" and Response.from_bytes(e.data).seq == rnd.fetch_seq),
                b"",
            )
            return _violated(
                report,
                SecurityRequirement.DP_INTEGRITY,
                PartyRole.DP,
                witness,
                f"inputs {list(rnd.inputs)} gave {rnd.result}, spec says {expected}",
            )
    return Held()


def check_asp_integrity(report: SecurityReport) -> RequirementStatus:
    if not report.entered_running:
        return NotApplicable(report.final_phase)
    quotes = list(report.evidence_trail)
    if report.final_quote is not None:
        quotes.append(report.final_quote)
    for q in quotes:
        if q.program_digest != report.asp_committed_digest:
            return _violated(
                report,
                SecurityRequirement.ASP_INTEGRITY,
                PartyRole.DP,
                q.to_bytes(),
                f"container quotes digest {q.program_digest.hex()[:16]}, ASP committed "
                f"{report.asp_committed_digest.hex()[:16]}",
            )
    return Held()


def check_asp_confidentiality(report: SecurityReport) -> RequirementStatus:
    watermark = report.scenario.program.watermark
    roles = (PartyRole.CP, PartyRole.SCP, PartyRole.DP)
    hit = _scan(report, roles, watermark) if watermark else None
    if hit:
        return _violated(report, SecurityRequirement.ASP_CONFIDENTIALITY, hit[0], hit[1], "program canary observed")
    return Held()


CHECKERS = {
    SecurityRequirement.DP_PRIVACY: check_dp_privacy,
    SecurityRequirement.DP_INTEGRITY: check_dp_integrity,
    SecurityRequirement.ASP_INTEGRITY: check_asp_integrity,
    SecurityRequirement.ASP_CONFIDENTIALITY: check_asp_confidentiality,
}


# -- running ---------------------------------------------------------------


def run_scenario(s: Scenario) -> SecurityReport:
    parties = make_parties(s.honesty, s.scripts, s.seed)
    d = Deployment(parties, s.program, s.spec, s.seed, s.magic)
    d.run_procedure()
    installed = d.container.program if d.container is not None and d.state.installed else None
    final_quote = None
    if d.state.phase is Phase.RUNNING:
        for i, inputs in enumerate(s.dp_inputs):
            if d.state.phase is not Phase.RUNNING:
                break
            d.dp_round(inputs)
            if i == 0:
                d.cp_running_attack()
        final_quote = d.final_quote()
    report = SecurityReport(
        scenario=s,
        final_phase=d.state.phase,
        entered_running=d.state.entered_running,
        abort_reason=d.state.abort_reason.to_dict() if d.state.abort_reason else None,
        asp_committed_digest=d.asp_committed_digest,
        published_digest=d.state.audited_program_digest,
        installed_program=installed,
        dp_canary=d.dp_canary,
        container_canary=d.container_canary,
        dp_rounds=d.dp_rounds,
        evidence_trail=list(d.state.published_evidence),
        final_quote=final_quote,
        events=d.events,
        transcripts={role: p.transcript for role, p in parties.items()},
    )
    for req, checker in CHECKERS.items():
        report.requirements[req] = checker(report)
    return report


def scenario_seed(base_seed: int, scenario_id: str) -> int:
    h = hashlib.sha256(seed_bytes(base_seed) + b"/" + scenario_id.encode()).digest()
    return int.from_bytes(h[:8], "big")


def watermark_for(seed: int) -> bytes:
    return hashlib.sha256(seed_bytes(seed) + b"/asp-watermark").digest()[:WATERMARK_SIZE]


def default_corpus() -> list[tuple[Program, FunctionalSpec]]:
    return [(specprog.ubi_rank_program(), specprog.ubi_rank_spec())]


def enumerate_scenarios(
    catalog: Optional[dict[PartyRole, Sequence[Script]]] = None,
    corpus: Optional[Sequence[tuple[Program, FunctionalSpec]]] = None,
    seed: int = 0,
    dp_inputs: Sequence[tuple[int, ...]] = DEFAULT_DP_INPUTS,
) -> list[Scenario]:
    """Every honesty assignment crossed with every consistent script choice.

    An honest role runs its honest script. A dishonest role ranges over its
    whole catalog, including the honest script ("malicious but inactive").
    Each program is re-watermarked per scenario.
    """
    catalog = catalog or SCRIPT_CATALOG
    corpus = corpus if corpus is not None else default_corpus()
    scenarios = []
    for pi, (program, spec) in enumerate(corpus):
        for h in all_assignments():
            choices = [
                (HONEST_SCRIPT[role],) if h.is_honest(role) else tuple(catalog[role]) for role in MALICIOUS_ROLES
            ]
            for combo in itertools.product(*choices):
                scripts = dict(zip(MALICIOUS_ROLES, combo))
                sid = f"p{pi}-{h.label()}-" + "-".join(s.value for s in combo)
                sseed = scenario_seed(seed, sid)
                marked = Program(program.arity, program.declared_channel, program.extra_channels, watermark_for(sseed))
                scenarios.append(Scenario(h, scripts, marked, spec, tuple(dp_inputs), sseed, sid))
    return scenarios


def run_all(scenarios: Sequence[Scenario], workers: int = 1) -> list[SecurityReport]:
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(run_scenario, scenarios, chunksize=16))
    else:
        reports = [run_scenario(s) for s in scenarios]
    return sorted(reports, key=lambda r: r.scenario_id)


# -- case analysis -----------------------------------------------------------


@dataclass
class CaseStats:
    scenarios: int = 0
    reached_running: int = 0
    with_violation: int = 0

    def add(self, report: SecurityReport) -> None:
        self.scenarios += 1
        self.reached_running += report.entered_running
        self.with_violation += bool(report.violations())

    def to_dict(self) -> dict:
        return {
            "scenarios": self.scenarios,
            "reached_running": self.reached_running,
            "with_violation": self.with_violation,
        }


def case_label(s: Scenario) -> str:
    """Which case a scenario falls in, judged by the scripts actually run."""
    active = s.active_attackers() - {PartyRole.CP}
    if not active:
        return "base"
    if PartyRole.AP in active and active - {PartyRole.AP}:
        return "collusion"
    if active == {PartyRole.AP}:
        return "malicious_ap"
    if active == {PartyRole.ASP}:
        return "malicious_asp"
    if active == {PartyRole.SCP}:
        return "malicious_scp"
    return "malicious_asp_scp"


@dataclass
class CaseAnalysisSummary:
    total: int
    elapsed_s: float
    assumption_holds: dict[str, CaseStats]
    assumption_violated: dict[str, CaseStats]
    violations_under_assumption: list[str]
    running_with_bad_component: list[str]
    necessity: dict[str, list[str]]

    @property
    def sound(self) -> bool:
        return not self.violations_under_assumption

    @property
    def gated(self) -> bool:
        return not self.running_with_bad_component

    @property
    def necessary(self) -> bool:
        return all(self.necessity[req.value] for req in SecurityRequirement)

    @property
    def ok(self) -> bool:
        return self.sound and self.gated and self.necessary

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "elapsed_s": round(self.elapsed_s, 3),
            "ok": self.ok,
            "assertions": {
                "no_violation_under_assumption": self.sound,
                "no_running_with_malicious_asp_or_scp": self.gated,
                "every_requirement_breakable_without_assumption": self.necessary,
            },
            "assumption_holds": {k: v.to_dict() for k, v in sorted(self.assumption_holds.items())},
            "assumption_violated": {k: v.to_dict() for k, v in sorted(self.assumption_violated.items())},
            "counterexamples": {
                "violations_under_assumption": self.violations_under_assumption,
                "running_with_bad_component": self.running_with_bad_component,
            },
            "necessity_witnesses": {k: v[:5] for k, v in self.necessity.items()},
        }


def verify_case_analysis(reports: Sequence[SecurityReport], elapsed_s: float = 0.0) -> CaseAnalysisSummary:
    holds: dict[str, CaseStats] = {}
    violated: dict[str, CaseStats] = {}
    bad_violation, bad_running = [], []
    necessity: dict[str, list[str]] = {req.value: [] for req in SecurityRequirement}
    for r in sorted(reports, key=lambda r: r.scenario_id):
        s = r.scenario
        bucket = holds if s.assumption_holds else violated
        bucket.setdefault(case_label(s), CaseStats()).add(r)
        if s.assumption_holds:
            if r.violations():
                bad_violation.append(s.id)
            if r.entered_running and s.active_attackers() & {PartyRole.ASP, PartyRole.SCP}:
                bad_running.append(s.id)
        else:
            for event in r.violations():
                necessity[event.requirement.value].append(s.id)
    return CaseAnalysisSummary(
        total=len(reports),
        elapsed_s=elapsed_s,
        assumption_holds=holds,
        assumption_violated=violated,
        violations_under_assumption=bad_violation,
        running_with_bad_component=bad_running,
        necessity=necessity,
    )


def run_case_analysis(seed: int = 0, workers: int = 1) -> tuple[CaseAnalysisSummary, list[SecurityReport]]:
    start = time.perf_counter()
    reports = run_all(enumerate_scenarios(seed=seed), workers=workers)
    return verify_case_analysis(reports, time.perf_counter() - start), reports
