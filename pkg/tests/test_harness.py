import itertools

import pytest

from sealedcomp import harness, specprog
from sealedcomp.harness import Held, NotApplicable, Scenario, Violated, run_scenario
from sealedcomp.model import HonestyAssignment, PartyRole, Phase, SecurityRequirement as R
from sealedcomp.protocol import APScript, ASPScript, CPScript, HONEST_SCRIPT, SCRIPT_CATALOG, SCPScript

SPEC = specprog.ubi_rank_spec()


def scenario(seed=3, **scripts):
    roles = {r.value.lower(): r for r in PartyRole}
    chosen = {roles[k]: v for k, v in scripts.items()}
    honesty = HonestyAssignment(**{k: False for k in scripts})
    program = specprog.ubi_rank_program(harness.watermark_for(seed))
    return Scenario(honesty, chosen, program, SPEC, harness.DEFAULT_DP_INPUTS, seed, "t")


def statuses(report):
    return {req: type(st) for req, st in report.requirements.items()}


def test_all_honest():
    r = run_scenario(scenario())
    assert r.final_phase is Phase.RUNNING
    assert set(statuses(r).values()) == {Held}
    assert [rnd.result for rnd in r.dp_rounds] == [65, 100, 0, 0, 73]


def test_leaky_asp_with_honest_auditor():
    r = run_scenario(scenario(asp=ASPScript.LEAKY_PROGRAM))
    assert r.final_phase is Phase.ABORTED
    st = statuses(r)
    assert st[R.DP_PRIVACY] is NotApplicable and st[R.DP_INTEGRITY] is NotApplicable
    assert st[R.ASP_CONFIDENTIALITY] is Held
    # integrity of what runs is moot when nothing runs
    assert st[R.ASP_INTEGRITY] is NotApplicable


def test_leaky_asp_with_colluding_auditor():
    r = run_scenario(scenario(asp=ASPScript.LEAKY_PROGRAM, ap=APScript.PASS_EVERYTHING))
    assert r.final_phase is Phase.RUNNING
    priv = r.requirements[R.DP_PRIVACY]
    assert isinstance(priv, Violated) and priv.event.observer is PartyRole.CP
    assert statuses(r)[R.DP_INTEGRITY] is Held


def test_incorrect_program_slips_through():
    r = run_scenario(scenario(asp=ASPScript.INCORRECT_PROGRAM, ap=APScript.PASS_EVERYTHING))
    v = r.requirements[R.DP_INTEGRITY]
    assert isinstance(v, Violated) and "inputs [10, 5] gave 66" in v.event.detail


def test_dump_backdoor_breaks_confidentiality():
    r = run_scenario(scenario(scp=SCPScript.BACKDOOR_DUMP, ap=APScript.PASS_EVERYTHING, cp=CPScript.RAW_PROBE))
    conf = r.requirements[R.ASP_CONFIDENTIALITY]
    assert isinstance(conf, Violated) and r.scenario.program.watermark in conf.event.witness
    integ = r.requirements[R.ASP_INTEGRITY]
    assert isinstance(integ, Violated)


def test_key_exfil_breaks_dp_privacy():
    r = run_scenario(scenario(scp=SCPScript.BACKDOOR_KEY_EXFIL, ap=APScript.PASS_EVERYTHING))
    v = r.requirements[R.DP_PRIVACY]
    assert isinstance(v, Violated) and r.dp_canary in v.event.witness


def test_aborted_before_deploy_keeps_program_secret():
    r = run_scenario(scenario(scp=SCPScript.BACKDOOR_DUMP))
    assert r.final_phase is Phase.ABORTED
    assert statuses(r)[R.ASP_CONFIDENTIALITY] is Held


def test_scenario_validation():
    with pytest.raises(ValueError):
        Scenario(HonestyAssignment(), {PartyRole.AP: APScript.PASS_EVERYTHING}, specprog.ubi_rank_program(), SPEC, (), 0)


def test_scenario_json_round_trip():
    s = scenario(asp=ASPScript.LEAKY_PROGRAM, cp=CPScript.RAW_PROBE)
    assert Scenario.from_dict(s.to_dict()) == s


def _independent_count():
    n = 0
    for flags in itertools.product((True, False), repeat=4):
        h = dict(zip(("asp", "scp", "ap", "cp"), flags))
        for combo in itertools.product(*(SCRIPT_CATALOG[r] for r in harness.MALICIOUS_ROLES)):
            n += all(
                not h[r.value.lower()] or s == HONEST_SCRIPT[r] for r, s in zip(harness.MALICIOUS_ROLES, combo)
            )
    return n


def test_enumeration_counts():
    scenarios = harness.enumerate_scenarios()
    assert len(scenarios) == _independent_count() == 500
    assert len({s.id for s in scenarios}) == len(scenarios)
    assert sum(s.honesty == HonestyAssignment() for s in scenarios) == 1
    asp_only = [s for s in scenarios if s.honesty == HonestyAssignment(asp=False)]
    assert len(asp_only) == len(SCRIPT_CATALOG[PartyRole.ASP]) == 4


def test_enumeration_per_program():
    corpus = harness.default_corpus() * 2
    assert len(harness.enumerate_scenarios(corpus=corpus)) == 1000


def test_report_is_deterministic():
    s = scenario(seed=99, asp=ASPScript.LEAKY_PROGRAM, ap=APScript.PASS_EVERYTHING, cp=CPScript.RAW_PROBE)
    assert run_scenario(s).to_json() == run_scenario(s).to_json()


def test_case_analysis(full_run):
    summary, reports, _ = full_run
    assert summary.total == 500
    assert summary.sound and summary.gated and summary.necessary and summary.ok
    # collusion between the AP and ASP yields privacy breaches
    collusion = [
        r
        for r in reports
        if harness.case_label(r.scenario) == "collusion"
        and r.scenario.scripts[PartyRole.ASP] is ASPScript.LEAKY_PROGRAM
        and r.scenario.scripts[PartyRole.AP] is APScript.PASS_EVERYTHING
    ]
    assert any(isinstance(r.requirements[R.DP_PRIVACY], Violated) for r in collusion)


def test_malicious_ap_alone_never_corrupts_running(full_run):
    _, reports, _ = full_run
    for r in reports:
        if harness.case_label(r.scenario) == "malicious_ap" and r.entered_running:
            assert not r.violations(), r.scenario_id


def test_witnesses_replay(full_run):
    _, reports, _ = full_run
    seen = set()
    for r in reports:
        for event in r.violations():
            if event.requirement in seen:
                continue
            seen.add(event.requirement)
            again = run_scenario(r.scenario)
            replayed = again.requirements[event.requirement]
            assert isinstance(replayed, Violated) and replayed.event == event
            assert any(event.witness in data for _, data in again.view(event.observer))
    assert seen == set(R)


def test_summary_serializes(full_run):
    summary, _, _ = full_run
    d = summary.to_dict()
    assert d["ok"] is True and d["total"] == 500
    assert all(d["assertions"].values())
