import itertools

import pytest
from hypothesis import given, strategies as st

from sealedcomp.model import (
    PHASE_TRANSITIONS,
    Action,
    HonestyAssignment,
    PartyRole,
    Phase,
    all_assignments,
    can_transition,
    global_assumption_holds,
    phase_allows,
)

assignments = st.builds(HonestyAssignment, st.booleans(), st.booleans(), st.booleans(), st.booleans())


@pytest.mark.parametrize(
    "flags, expected",
    [
        ((True, False, False, False), True),
        ((False, True, True, False), True),
        ((False, True, False, True), False),
    ],
)
def test_assumption_examples(flags, expected):
    ap, scp, asp, cp = flags
    assert global_assumption_holds(HonestyAssignment(ap=ap, scp=scp, asp=asp, cp=cp)) is expected


def test_truth_table_against_formula():
    rows = list(all_assignments())
    assert len(set(rows)) == 16
    for h in rows:
        assert global_assumption_holds(h) == (h.ap or (h.scp and h.asp))
    # 8 with the AP honest, plus 2 (CP either way) with only SCP and ASP honest
    assert sum(map(global_assumption_holds, rows)) == 10


@given(assignments)
def test_cp_never_matters(h):
    assert global_assumption_holds(h) == global_assumption_holds(h.flip_cp())


@given(assignments)
def test_assignment_round_trip(h):
    assert HonestyAssignment.from_dict(h.to_dict()) == h
    assert h.is_honest(PartyRole.DP)


def test_from_dict_rejects_dp_flag():
    with pytest.raises(ValueError):
        HonestyAssignment.from_dict({"dp": False})


@pytest.mark.parametrize(
    "phase, action, expected",
    [
        (Phase.CHECKING, "data_upload", False),
        (Phase.RUNNING, "data_upload", True),
        (Phase.RUNNING, "result_fetch", True),
        (Phase.CHECKING, "audit", True),
        (Phase.CHECKING, "seal", True),
        (Phase.RUNNING, "deploy", False),
        (Phase.MAINTENANCE, "data_upload", False),
    ],
)
def test_phase_allows_examples(phase, action, expected):
    assert phase_allows(phase, action) is expected


def test_aborted_is_terminal():
    assert not any(phase_allows(Phase.ABORTED, a) for a in Action)
    assert PHASE_TRANSITIONS[Phase.ABORTED] == frozenset()
    assert not any(can_transition(Phase.ABORTED, p) for p in Phase)


def test_running_only_from_checking():
    sources = {src for src, dsts in PHASE_TRANSITIONS.items() if Phase.RUNNING in dsts}
    assert sources == {Phase.CHECKING}


def test_upload_and_fetch_only_in_running():
    for phase, action in itertools.product(Phase, (Action.DATA_UPLOAD, Action.RESULT_FETCH)):
        assert phase_allows(phase, action) == (phase is Phase.RUNNING)
