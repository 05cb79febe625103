import json

from helpers import AP, PROGRAM, SCP, installed
from sealedcomp import specprog
from sealedcomp.cli import main


def test_make_scenario_then_run(tmp_path):
    sc = tmp_path / "s.json"
    assert main(["make-scenario", "--id", "demo", "--seed", "4", "--out", str(sc)]) == 0
    out = tmp_path / "r.json"
    assert main(["run", "--scenario", str(sc), "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["final_phase"] == "Running"
    assert {v["status"] for v in report["requirements"].values()} == {"Held"}


def test_run_breach_outside_assumption_exits_zero(tmp_path):
    sc = tmp_path / "s.json"
    main(["make-scenario", "--ap", "PassEverything", "--asp", "LeakyProgram", "--out", str(sc)])
    out = tmp_path / "r.json"
    assert main(["run", "--scenario", str(sc), "--seed", "7", "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["seed"] == 7 and not report["assumption_holds"]
    assert report["requirements"]["DpPrivacy"]["status"] == "Violated"


def test_run_is_byte_identical(tmp_path):
    sc = tmp_path / "s.json"
    main(["make-scenario", "--scp", "BackdoorDump", "--ap", "PassEverything", "--cp", "RawProbe", "--out", str(sc)])
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    main(["run", "--scenario", str(sc), "--out", str(a)])
    main(["run", "--scenario", str(sc), "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_verify_evidence(capsys):
    e = installed().c.quote()
    digest = specprog.digest(PROGRAM).hex()
    args = ["verify-evidence", "--evidence", e.hex(), "--scp-pub", SCP.public.hex(), "--ap-pub", AP.public.hex()]
    assert main(args + ["--digest", digest]) == 0
    assert capsys.readouterr().out.strip() == "Accept"
    assert main(args + ["--digest", "00" * 32]) == 1
    assert capsys.readouterr().out.strip() == "RejectDigestMismatch"
    assert main(args + ["--digest", digest, "--stale-nonce", e.sealing_nonce.hex()]) == 1
    assert capsys.readouterr().out.strip() == "RejectStale"
    assert main(["verify-evidence", "--evidence", "abcd", "--scp-pub", "", "--ap-pub", "", "--digest", ""]) == 2


def test_enumerate(tmp_path):
    out = tmp_path / "summary.json"
    assert main(["enumerate", "--catalog", "default", "--out", str(out)]) == 0
    summary = json.loads(out.read_text())
    assert summary["ok"] and summary["total"] == 500
