"""Shared vocabulary: roles, honesty assignments, phases and requirements."""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, replace
from typing import Iterator


class PartyRole(str, enum.Enum):
    DP = "DP"
    ASP = "ASP"
    CP = "CP"
    AP = "AP"
    SCP = "SCP"


@dataclass(frozen=True)
class HonestyAssignment:
    """Honesty flags for the four parties that may misbehave.

    The DP has no flag on purpose: it is always honest and there is no
    way to express otherwise.
    """

    ap: bool = True
    scp: bool = True
    asp: bool = True
    cp: bool = True

    def flip_cp(self) -> "HonestyAssignment":
        return replace(self, cp=not self.cp)

    def is_honest(self, role: PartyRole) -> bool:
        if role is PartyRole.DP:
            return True
        return getattr(self, role.value.lower())

    def to_dict(self) -> dict[str, bool]:
        return {"ap": self.ap, "scp": self.scp, "asp": self.asp, "cp": self.cp}

    @classmethod
    def from_dict(cls, data: dict) -> "HonestyAssignment":
        unknown = set(data) - {"ap", "scp", "asp", "cp"}
        if unknown:
            raise ValueError(f"unknown honesty flags: {sorted(unknown)}")
        return cls(**{k: bool(v) for k, v in data.items()})

    def label(self) -> str:
        return "".join(
            f"{name}{int(flag)}"
            for name, flag in (("ap", self.ap), ("scp", self.scp), ("asp", self.asp), ("cp", self.cp))
        )


def all_assignments() -> Iterator[HonestyAssignment]:
    """All 16 assignments, honest-first, in a fixed order."""
    for ap, scp, asp, cp in itertools.product((True, False), repeat=4):
        yield HonestyAssignment(ap=ap, scp=scp, asp=asp, cp=cp)


def global_assumption_holds(h: HonestyAssignment) -> bool:
    # AP or (SCP and ASP); the CP flag deliberately plays no part.
    return h.ap or (h.scp and h.asp)


class Phase(str, enum.Enum):
    CHECKING = "Checking"
    RUNNING = "Running"
    MAINTENANCE = "Maintenance"
    ABORTED = "Aborted"


# Running is entered only from Checking; Aborted is terminal.
PHASE_TRANSITIONS: dict[Phase, frozenset[Phase]] = {
    Phase.CHECKING: frozenset({Phase.CHECKING, Phase.RUNNING, Phase.ABORTED}),
    Phase.RUNNING: frozenset({Phase.MAINTENANCE, Phase.ABORTED}),
    Phase.MAINTENANCE: frozenset({Phase.CHECKING, Phase.ABORTED}),
    Phase.ABORTED: frozenset(),
}


def can_transition(src: Phase, dst: Phase) -> bool:
    return dst in PHASE_TRANSITIONS[src]


class Action(str, enum.Enum):
    AUDIT = "audit"
    SEAL = "seal"
    DEPLOY = "deploy"
    DATA_UPLOAD = "data_upload"
    RESULT_FETCH = "result_fetch"
    MAINTAIN = "maintain"


_ALLOWED = {
    Phase.CHECKING: {Action.AUDIT, Action.SEAL, Action.DEPLOY},
    Phase.RUNNING: {Action.DATA_UPLOAD, Action.RESULT_FETCH, Action.MAINTAIN},
    Phase.MAINTENANCE: set(),
    Phase.ABORTED: set(),
}


def phase_allows(phase: Phase, action: Action | str) -> bool:
    return Action(action) in _ALLOWED[Phase(phase)]


class SecurityRequirement(str, enum.Enum):
    DP_PRIVACY = "DpPrivacy"
    DP_INTEGRITY = "DpIntegrity"
    ASP_INTEGRITY = "AspIntegrity"
    ASP_CONFIDENTIALITY = "AspConfidentiality"


@dataclass(frozen=True)
class ViolationEvent:
    """A requirement breach together with the transcript bytes that prove it."""

    requirement: SecurityRequirement
    witness: bytes
    observer: PartyRole
    scenario_id: str
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "requirement": self.requirement.value,
            "witness": self.witness.hex(),
            "observer": self.observer.value,
            "scenario_id": self.scenario_id,
            "detail": self.detail,
        }


class StateError(RuntimeError):
    """An operation was invoked in a phase or container state that forbids it."""
