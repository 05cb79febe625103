"""Strategy-driven parties and the trust establishment procedure.

A :class:`Deployment` owns the container, the public bulletin board
(:class:`DeploymentState`) and a relay through which every message to the
container passes. Once sealing has started the relay is operated by the CP,
which records all traffic and applies its attack script.

Parties act on their *script*, not their honesty flag: a dishonest party
running the honest script behaves honestly, including performing mutual
checks.
"""

from __future__ import annotations

import enum
import hashlib
import logging
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence, Union

from . import attest, container as ct, specprog
from .attest import AttestationEvidence, KeyPair, VerifyResult
from .container import DestroyedError, Message, Response, SealedContainer
from .model import HonestyAssignment, PartyRole, Phase, StateError, can_transition, phase_allows
from .specprog import FunctionalSpec, Input, Program

logger = logging.getLogger(__name__)

CANARY_SIZE = 16


class ASPScript(str, enum.Enum):
    HONEST_PROGRAM = "HonestProgram"
    LEAKY_PROGRAM = "LeakyProgram"
    INCORRECT_PROGRAM = "IncorrectProgram"
    SUBSTITUTE_AT_DEPLOY = "SubstituteAtDeploy"


class SCPScript(str, enum.Enum):
    HONEST_CONTAINER = "HonestContainer"
    BACKDOOR_DUMP = "BackdoorDump"
    BACKDOOR_KEY_EXFIL = "BackdoorKeyExfil"


class APScript(str, enum.Enum):
    HONEST_AUDIT = "HonestAudit"
    PASS_EVERYTHING = "PassEverything"
    INJECT_TROJAN_PROGRAM = "InjectTrojanProgram"
    INJECT_CONTAINER_BACKDOOR = "InjectContainerBackdoor"


class CPScript(str, enum.Enum):
    PASSIVE = "Passive"
    RAW_PROBE = "RawProbe"
    REPLAY_MESSAGES = "ReplayMessages"
    LEAK_ASP_CIPHERTEXT = "LeakAspCiphertext"


class DPScript(str, enum.Enum):
    HONEST = "Honest"


Script = Union[ASPScript, SCPScript, APScript, CPScript, DPScript]

SCRIPT_CATALOG: dict[PartyRole, tuple[Script, ...]] = {
    PartyRole.ASP: tuple(ASPScript),
    PartyRole.SCP: tuple(SCPScript),
    PartyRole.AP: tuple(APScript),
    PartyRole.CP: tuple(CPScript),
    PartyRole.DP: tuple(DPScript),
}

HONEST_SCRIPT: dict[PartyRole, Script] = {role: scripts[0] for role, scripts in SCRIPT_CATALOG.items()}


def parse_script(role: PartyRole, name: str) -> Script:
    for s in SCRIPT_CATALOG[role]:
        if s.value == name:
            return s
    raise ValueError(f"unknown {role.value} script {name!r}")


# -- program manipulations used by the attack scripts ----------------------


def leaky_variant(p: Program) -> Program:
    """Same declared behaviour plus an extra channel echoing the first input."""
    return Program(p.arity, p.declared_channel, (*p.extra_channels, Input(0)), p.watermark)


def incorrect_variant(p: Program) -> Program:
    return Program(p.arity, specprog.add(p.declared_channel, specprog.Const(1)), p.extra_channels, p.watermark)


def substitute_variant(p: Program) -> Program:
    return incorrect_variant(leaky_variant(p))


def trojan_variant(p: Program) -> Program:
    """What a trojan-injecting auditor hands back: an extra channel leaking the last input."""
    return Program(p.arity, p.declared_channel, (*p.extra_channels, Input(p.arity - 1)), p.watermark)


def probe_patch(arity: int) -> Program:
    """Replacement code a prober pushes through a code-changing backdoor."""
    return Program(arity, specprog.Const(0))


# -- transcripts and events -------------------------------------------------


@dataclass(frozen=True)
class TranscriptEntry:
    label: str
    data: bytes

    def to_dict(self) -> dict:
        return {"label": self.label, "data": self.data.hex()}


class Transcript:
    """Append-only log of the bytes a party sent or observed."""

    def __init__(self) -> None:
        self._entries: list[TranscriptEntry] = []

    def append(self, label: str, data: bytes) -> None:
        self._entries.append(TranscriptEntry(label, bytes(data)))

    def __iter__(self) -> Iterator[TranscriptEntry]:
        return iter(tuple(self._entries))

    def __len__(self) -> int:
        return len(self._entries)

    def find(self, needle: bytes) -> Optional[TranscriptEntry]:
        if not needle:
            return None
        for entry in self._entries:
            if needle in entry.data:
                return entry
        return None

    def to_list(self) -> list[dict]:
        return [e.to_dict() for e in self._entries]

    @classmethod
    def from_list(cls, items: Sequence[dict]) -> "Transcript":
        t = cls()
        for item in items:
            t.append(item["label"], bytes.fromhex(item["data"]))
        return t


@dataclass(frozen=True)
class Event:
    step: str
    actor: str
    kind: str
    payload_digest: str

    def line(self) -> str:
        return f"{self.step} {self.actor} {self.kind} {self.payload_digest}"


@dataclass
class Party:
    role: PartyRole
    honest: bool
    strategy: Script
    keys: KeyPair
    transcript: Transcript = field(default_factory=Transcript)

    def __post_init__(self):
        if self.strategy not in SCRIPT_CATALOG[self.role]:
            raise ValueError(f"{self.strategy!r} is not a {self.role.value} script")
        if self.honest and self.strategy != HONEST_SCRIPT[self.role]:
            raise ValueError(f"honest {self.role.value} must run {HONEST_SCRIPT[self.role].value}")

    @property
    def acts_honestly(self) -> bool:
        return self.strategy == HONEST_SCRIPT[self.role]


# -- step outcomes and public state ----------------------------------------


@dataclass(frozen=True)
class Approved:
    digest: bytes


@dataclass(frozen=True)
class AbortedDetected:
    by: str
    what: str

    def to_dict(self) -> dict:
        return {"by": self.by, "what": self.what}


StepOutcome = Union[Approved, AbortedDetected]


@dataclass
class DeploymentState:
    """The public bulletin board plus the current phase."""

    phase: Phase = Phase.CHECKING
    published_evidence: list[AttestationEvidence] = field(default_factory=list)
    audited_program_digest: Optional[bytes] = None
    stale_evidence: set[bytes] = field(default_factory=set)
    abort_reason: Optional[AbortedDetected] = None
    entered_running: bool = False
    software_approved: bool = False
    container_approved: bool = False
    sealed: bool = False
    installed: bool = False


@dataclass
class DPRound:
    inputs: tuple[int, ...]
    upload_seq: int
    fetch_seq: int
    result: Optional[int]
    extras: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        return {
            "inputs": list(self.inputs),
            "upload_seq": self.upload_seq,
            "fetch_seq": self.fetch_seq,
            "result": self.result,
            "extras": list(self.extras),
        }


def make_parties(
    honesty: HonestyAssignment, scripts: dict[PartyRole, Script], seed: int
) -> dict[PartyRole, Party]:
    parties = {}
    for role in PartyRole:
        script = scripts.get(role, HONEST_SCRIPT[role])
        keys = attest.keygen(attest.seed_bytes(seed) + b"/" + role.value.encode())
        parties[role] = Party(role, honesty.is_honest(role), script, keys)
    return parties


class Deployment:
    """One run of the trust establishment procedure and the Running phase after it."""

    def __init__(
        self,
        parties: dict[PartyRole, Party],
        program: Program,
        spec: FunctionalSpec,
        seed: int,
        magic: bytes = ct.DEFAULT_MAGIC,
    ):
        self.parties = parties
        self.spec = spec
        self.seed = seed
        self.magic = magic
        self.state = DeploymentState()
        self.container: Optional[SealedContainer] = None
        self.events: list[Event] = []
        self.dp_rounds: list[DPRound] = []
        self.asp_original = program
        self.asp_holding = program
        self.scp_design: Optional[ct.BehaviorDescriptor] = None
        self.dp_canary = self._material("dp-canary")[:CANARY_SIZE]
        self.container_canary = b""
        self.dp_session: Optional[ct.ChannelSession] = None
        self._seq = 0
        self._draws = 0
        self._sealings = 0

    # -- plumbing --------------------------------------------------------

    def party(self, role: PartyRole) -> Party:
        return self.parties[role]

    @property
    def asp_committed_digest(self) -> bytes:
        """Digest of the program the ASP itself put forward in step 1.a."""
        return specprog.digest(self._asp_submission())

    def _material(self, label: str) -> bytes:
        return hashlib.sha256(attest.seed_bytes(self.seed) + b"/" + label.encode()).digest()

    def _draw(self, label: str) -> bytes:
        self._draws += 1
        return self._material(f"{label}/{self._draws}")

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def _event(self, step: str, actor: Union[PartyRole, str], kind: str, payload: bytes = b"") -> None:
        name = actor.value if isinstance(actor, PartyRole) else actor
        self.events.append(Event(step, name, kind, hashlib.sha256(payload).hexdigest()[:16]))

    def _set_phase(self, phase: Phase) -> None:
        if not can_transition(self.state.phase, phase):
            raise StateError(f"no transition {self.state.phase.value} -> {phase.value}")
        self.state.phase = phase

    def _abort(self, step: str, by: str, what: str) -> AbortedDetected:
        outcome = AbortedDetected(by, what)
        self.state.abort_reason = outcome
        self._set_phase(Phase.ABORTED)
        self._event(step, by, "abort", what.encode())
        logger.info("aborted at step %s by %s: %s", step, by, what)
        return outcome

    def _require_phase(self, phase: Phase, what: str) -> None:
        if self.state.phase is not phase:
            raise StateError(f"{what} requires phase {phase.value}, deployment is {self.state.phase.value}")

    def _relay(self, sender: Party, label: str, msg: Union[Message, bytes]) -> Response:
        """Deliver ``msg`` to the container through the CP and log both directions."""
        raw = msg.to_bytes() if isinstance(msg, Message) else bytes(msg)
        cp = self.party(PartyRole.CP)
        sender.transcript.append(f"{label}>", raw)
        if sender is not cp:
            cp.transcript.append(f"{label}>", raw)
        try:
            response = self.container.handle(raw)
        except DestroyedError as exc:
            for p in {id(sender): sender, id(cp): cp}.values():
                p.transcript.append(f"{label}!", b"destroyed")
            self._event("wire", sender.role, f"{label}-destroyed", str(exc).encode())
            raise
        out = response.to_bytes()
        sender.transcript.append(f"{label}<", out)
        if sender is not cp:
            cp.transcript.append(f"{label}<", out)
        asp = self.party(PartyRole.ASP)
        if label == "fetch" and not asp.acts_honestly and sender is not asp:
            # a dishonest ASP watches the service's public outputs for its leak channel
            asp.transcript.append(f"{label}<", out)
        self._event("wire", sender.role, label, raw)
        return response

    # -- step 1 ----------------------------------------------------------

    def _asp_submission(self) -> Program:
        script = self.party(PartyRole.ASP).strategy
        if script is ASPScript.LEAKY_PROGRAM:
            return leaky_variant(self.asp_original)
        if script is ASPScript.INCORRECT_PROGRAM:
            return incorrect_variant(self.asp_original)
        return self.asp_original

    def check_software(self) -> StepOutcome:
        self._require_phase(Phase.CHECKING, "software check")
        ap, asp = self.party(PartyRole.AP), self.party(PartyRole.ASP)
        submitted = self._asp_submission()
        encoded = specprog.encode(submitted)
        asp.transcript.append("software>", encoded)
        ap.transcript.append("software<", encoded)
        self._event("1.a", asp.role, "submit", encoded)

        if ap.strategy is APScript.HONEST_AUDIT:
            verdict = specprog.audit(submitted, self.spec)
            if not isinstance(verdict, specprog.Pass):
                return self._abort("1.b", "AP", f"audit verdict {verdict.to_dict()}")
            returned = submitted
        elif ap.strategy is APScript.INJECT_TROJAN_PROGRAM:
            returned = trojan_variant(submitted)
        else:
            returned = submitted
        back = specprog.encode(returned)
        ap.transcript.append("software-approved>", back)
        asp.transcript.append("software-approved<", back)
        self._event("1.b", ap.role, "approve", back)

        if asp.acts_honestly and specprog.digest(returned) != specprog.digest(submitted):
            return self._abort("1.c", "ASP", "auditor changed the analytics software")
        self.asp_holding = returned
        digest = specprog.digest(returned)
        self.state.audited_program_digest = digest
        self.state.software_approved = True
        self._event("1.d", "AP+ASP", "publish-digest", digest)
        return Approved(digest)

    # -- step 2 ----------------------------------------------------------

    def _scp_descriptor(self) -> ct.BehaviorDescriptor:
        script = self.party(PartyRole.SCP).strategy
        if script is SCPScript.BACKDOOR_DUMP:
            return ct.BackdoorDump(self.magic)
        if script is SCPScript.BACKDOOR_KEY_EXFIL:
            return ct.BackdoorKeyExfil()
        return ct.Honest()

    def check_container(self) -> StepOutcome:
        self._require_phase(Phase.CHECKING, "mechanism check")
        ap, scp = self.party(PartyRole.AP), self.party(PartyRole.SCP)
        if self.container is None:
            self.scp_design = self._scp_descriptor()
            self.container = ct.provision(self.scp_design, self._material("container"))
            # ground truth for the checkers; never handed to any party
            self.container_canary = self.container._canary
            self._event("2.a", scp.role, "provision", self.container.container_id)
        c = self.container
        design = repr(self.scp_design).encode()
        scp.transcript.append("mechanism>", design)
        ap.transcript.append("mechanism<", repr(c.behavior).encode())

        if ap.strategy is APScript.HONEST_AUDIT:
            verdict = ct.inspect_mechanism(c)
            if isinstance(verdict, ct.MechanismBackdoor):
                return self._abort("2.b", "AP", f"mechanism backdoor {verdict.found.to_dict()}")
        elif ap.strategy is APScript.INJECT_CONTAINER_BACKDOOR:
            c.behavior = ct.BackdoorDump(self.magic)
        self._event("2.b", ap.role, "inspect", repr(c.behavior).encode())

        if scp.acts_honestly and c.behavior != self.scp_design:
            return self._abort("2.c", "SCP", "auditor added functionality to the mechanism")
        c.embed_secrets(scp.keys.secret, ap.keys.secret)
        self.state.container_approved = True
        self._event("2.d", "AP+SCP", "embed-keys", scp.keys.public + ap.keys.public)
        return Approved(c.container_id)

    # -- steps 3 and 4 ---------------------------------------------------

    def start_sealing(self) -> bytes:
        self._require_phase(Phase.CHECKING, "sealing")
        if not (self.state.software_approved and self.state.container_approved):
            raise StateError("sealing needs both checks approved")
        self._sealings += 1
        nonce = self.container.seal(self.state.audited_program_digest, self._draw("seal"))
        self.state.sealed = True
        self._event("3", "AP+SCP", "seal", nonce)
        self._event("3", PartyRole.CP, "custody", self.container.container_id)
        return nonce

    def confidential_load(self) -> StepOutcome:
        self._require_phase(Phase.CHECKING, "confidential load")
        if not self.state.sealed or self.state.installed:
            raise StateError("confidential load needs a freshly sealed container")
        asp, cp = self.party(PartyRole.ASP), self.party(PartyRole.CP)
        scp_pub, ap_pub = self.party(PartyRole.SCP).keys.public, self.party(PartyRole.AP).keys.public
        priv, hello = ct.client_hello(self._draw("asp-hello"), self._next_seq())
        try:
            reply = self._relay(asp, "handshake", hello)
            if cp.strategy is CPScript.REPLAY_MESSAGES:
                self._relay(cp, "replay", hello)
        except DestroyedError as exc:
            return self._abort("4", "container", f"destroyed: {exc}")
        try:
            session = ct.client_finish(priv, hello, reply, scp_pub, ap_pub)
        except ct.channel.ChannelError as exc:
            return self._abort("4", "ASP", f"container failed authentication: {exc}")

        program = self.asp_holding
        if asp.strategy is ASPScript.SUBSTITUTE_AT_DEPLOY:
            program = substitute_variant(self.asp_original)
        msg = ct.deploy_message(session, self._next_seq(), program)
        if cp.strategy is CPScript.LEAK_ASP_CIPHERTEXT:
            cp.transcript.append("sink", msg.body)
        try:
            response = self._relay(asp, "deploy", msg)
        except DestroyedError as exc:
            return self._abort("4", "container", f"destroyed: {exc}")
        self.state.installed = True
        self._event("4", asp.role, "installed", response.payload)
        return Approved(response.payload)

    # -- entering and running --------------------------------------------

    def dp_verify(
        self,
        evidence: AttestationEvidence,
        scp_public: bytes,
        ap_public: bytes,
        published_digest: bytes,
    ) -> bool:
        return self.verify_result(evidence, scp_public, ap_public, published_digest).accepted

    def verify_result(
        self, evidence: AttestationEvidence, scp_public: bytes, ap_public: bytes, published_digest: bytes
    ) -> VerifyResult:
        return attest.verify_evidence(
            evidence, scp_public, ap_public, published_digest, frozenset(self.state.stale_evidence)
        )

    def request_quote(self) -> AttestationEvidence:
        dp = self.party(PartyRole.DP)
        response = self._relay(dp, "attest", ct.attest_message(self._next_seq()))
        return AttestationEvidence.from_bytes(response.payload)

    def enter_running(self, evidence: Optional[AttestationEvidence] = None) -> Phase:
        """DP checks a quote against the published digest; Running starts only on Accept.

        ``evidence`` defaults to a fresh quote from the container. A stale
        quote leaves the deployment in Checking.
        """
        self._require_phase(Phase.CHECKING, "service start-up")
        if not self.state.installed:
            raise StateError("nothing installed")
        scp, ap = self.party(PartyRole.SCP), self.party(PartyRole.AP)
        try:
            if evidence is None:
                evidence = self.request_quote()
            result = self.verify_result(evidence, scp.keys.public, ap.keys.public, self.state.audited_program_digest)
            self._event("run", PartyRole.DP, f"verify-{result.value}", evidence.to_bytes())
            if result is VerifyResult.REJECT_STALE:
                return self.state.phase
            if not result.accepted:
                self._abort("run", "DP", f"evidence rejected: {result.value}")
                return self.state.phase
            self.dp_session = self._dp_handshake(evidence.sealing_nonce)
        except DestroyedError as exc:
            self._abort("run", "container", f"destroyed: {exc}")
            return self.state.phase
        except ct.channel.ChannelError as exc:
            self._abort("run", "DP", f"channel rejected: {exc}")
            return self.state.phase
        if evidence not in self.state.published_evidence:
            self.state.published_evidence.append(evidence)
        self._set_phase(Phase.RUNNING)
        self.state.entered_running = True
        self._event("run", PartyRole.DP, "running", evidence.sealing_nonce)
        return self.state.phase

    def _dp_handshake(self, nonce: bytes) -> ct.ChannelSession:
        dp = self.party(PartyRole.DP)
        priv, hello = ct.client_hello(self._draw("dp-hello"), self._next_seq())
        reply = self._relay(dp, "handshake", hello)
        return ct.client_finish(
            priv, hello, reply, self.party(PartyRole.SCP).keys.public, self.party(PartyRole.AP).keys.public, nonce
        )

    def dp_round(self, inputs: Sequence[int]) -> Optional[int]:
        """Upload one input tuple and fetch the result; ``None`` if the container died."""
        if not phase_allows(self.state.phase, "data_upload"):
            raise StateError(f"data upload not allowed in {self.state.phase.value}")
        xs = self.spec.check_inputs(inputs)
        dp = self.party(PartyRole.DP)
        up_seq, fetch_seq = self._next_seq(), self._next_seq()
        record = DPRound(xs, up_seq, fetch_seq, None)
        self.dp_rounds.append(record)
        try:
            self._relay(dp, "upload", ct.upload_message(self.dp_session, up_seq, xs, self.dp_canary))
            response = self._relay(dp, "fetch", ct.fetch_message(fetch_seq))
        except DestroyedError as exc:
            self._abort("run", "container", f"destroyed: {exc}")
            return None
        record.result, record.extras = ct.open_result(self.dp_session, response)
        return record.result

    def cp_running_attack(self) -> None:
        cp = self.party(PartyRole.CP)
        if self.state.phase is not Phase.RUNNING or cp.strategy is not CPScript.RAW_PROBE:
            return
        raw = self.magic + specprog.encode(probe_patch(self.asp_original.arity))
        try:
            self._relay(cp, "probe", raw)
        except DestroyedError as exc:
            self._abort("run", "container", f"destroyed: {exc}")

    def final_quote(self) -> Optional[AttestationEvidence]:
        """DP re-attests at the end of the Running phase (monitoring)."""
        if self.state.phase is not Phase.RUNNING:
            return None
        try:
            return self.request_quote()
        except DestroyedError as exc:
            self._abort("run", "container", f"destroyed: {exc}")
            return None

    # -- maintenance -------------------------------------------------------

    def maintenance_restart(self) -> DeploymentState:
        """Reset the container; all evidence published so far becomes stale."""
        self._require_phase(Phase.RUNNING, "maintenance")
        self._set_phase(Phase.MAINTENANCE)
        self.state.stale_evidence.update(e.sealing_nonce for e in self.state.published_evidence)
        self.container.reset()
        self.dp_session = None
        self.state.container_approved = False
        self.state.sealed = False
        self.state.installed = False
        self._event("5", "CP", "restart", self.container.container_id)
        return self.state

    def begin_recheck(self, ap_present: bool = True, scp_present: bool = True) -> None:
        self._require_phase(Phase.MAINTENANCE, "re-check")
        if not (ap_present and scp_present):
            raise StateError("AP and SCP must both be present to re-check after a restart")
        self._set_phase(Phase.CHECKING)
        self._event("5", "AP+SCP", "recheck", b"")

    def recheck(self) -> Phase:
        """Steps 2-4 again after a restart, then try to re-enter Running."""
        self.begin_recheck()
        return self._finish_from_container_check()

    def _finish_from_container_check(self) -> Phase:
        if isinstance(self.check_container(), AbortedDetected):
            return self.state.phase
        self.start_sealing()
        if isinstance(self.confidential_load(), AbortedDetected):
            return self.state.phase
        return self.enter_running()

    def run_procedure(self) -> Phase:
        """Steps 1-4 and service start-up; stops at the first detection."""
        if isinstance(self.check_software(), AbortedDetected):
            return self.state.phase
        return self._finish_from_container_check()
