import json
import subprocess
import sys

import pytest

from roomagent.cli import main
from roomagent.harness import EXIT_CONFIG, EXIT_CRITERION, EXIT_INTEGRITY, EXIT_LOAD, EXIT_OK, EXIT_QUERY


def files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.is_file()}


def run(tmp_path, *args):
    return main(["run", *args, "--out", str(tmp_path)])


@pytest.fixture(scope="module")
def rect_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("rect")
    assert main(["run", "rect", "--seed", "3", "--ticks", "60", "--out", str(out)]) == EXIT_OK
    return out


def test_football_run_has_the_touch_rule(tmp_path, capsys):
    assert run(tmp_path, "football", "--seed", "7", "--ticks", "200") == EXIT_OK
    names = json.loads((tmp_path / "summary.json").read_text())["names"]["signals"]
    touch = json.loads((tmp_path / "interface.json").read_text())["actions"].index(["touch", "Motor", None])
    rules = [json.loads(x) for x in (tmp_path / "rules.jsonl").read_text().splitlines()]
    hit = [r for r in rules if r["condition"] == [[[names["v1"], names["v2"]], touch]]
           and r["consequent"] == [names["t1"]]]
    assert hit and hit[0]["confidence"] == 1.0
    assert json.loads(capsys.readouterr().out)["rules"] == len(rules)


def test_runs_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["run", "football", "--seed", "7", "--ticks", "200", "--out", str(d)]) == EXIT_OK
    assert files(a) == files(b)
    assert {"frames.jsonl", "rules.jsonl", "summary.json", "episodes.jsonl", "priorities.jsonl"} <= set(files(a))


def test_zero_ticks_is_empty(tmp_path):
    assert run(tmp_path, "football", "--seed", "7", "--ticks", "0") == EXIT_OK
    assert (tmp_path / "frames.jsonl").read_text() == ""
    assert (tmp_path / "rules.jsonl").read_text() == ""
    assert json.loads((tmp_path / "summary.json").read_text())["rules"] == 0


def test_gated_run(tmp_path):
    assert run(tmp_path, "maze_blind", "--seed", "1", "--ticks", "200", "--gate", "vision") == EXIT_OK
    summary = json.loads((tmp_path / "summary.json").read_text())
    vision = set(summary["names"]["channels"]["vision"])
    assert summary["tasks"][0]["success"]
    for line in (tmp_path / "episodes.jsonl").read_text().splitlines():
        assert not {s for g, _ in json.loads(line)["trace"] for s in g} & vision


def probe(stores, tmp_path, lines, capsys):
    q = tmp_path / "q.jsonl"
    q.write_text("".join(l + "\n" for l in lines))
    code = main(["probe", str(stores), "--queries", str(q)])
    return code, [json.loads(x) for x in capsys.readouterr().out.splitlines()]


def test_probe_referent(rect_run, tmp_path, capsys):
    recs = [json.loads(x) for x in (rect_run / "recall_objects.jsonl").read_text().splitlines()]
    objs = [json.loads(x) for x in (rect_run / "objects.jsonl").read_text().splitlines()]
    r_sig = json.loads((rect_run / "summary.json").read_text())["names"]["signals"]["r"]
    rect_obj = next(o["id"] for o in objs if o["defining_group"] == [r_sig])
    quale = next(q["id"] for q in recs if q["referent"] == rect_obj)
    code, out = probe(rect_run, tmp_path, [json.dumps({"query": "REFERENT", "id": f"rec:{quale}"})], capsys)
    assert code == EXIT_OK and out[0]["answer"] == f"obj:{rect_obj}"


def test_probe_unknown_id_faults(rect_run, tmp_path, capsys):
    code, out = probe(rect_run, tmp_path, ['{"query":"REFERENT","id":"rec:42"}',
                                           '{"query":"LIST_OBJECTS","kind":"recall"}'], capsys)
    assert code == EXIT_QUERY and "fault" in out[0] and "answer" in out[1]


def test_probe_malformed_line(rect_run, tmp_path, capsys):
    code, out = probe(rect_run, tmp_path, ["{nope"], capsys)
    assert code == EXIT_QUERY and "error" in out[0]


def test_probe_empty_stream(rect_run, tmp_path, capsys):
    code, out = probe(rect_run, tmp_path, [], capsys)
    assert code == EXIT_OK and out == []


def test_probe_missing_stores(tmp_path):
    assert main(["probe", str(tmp_path / "nowhere")]) == EXIT_LOAD


def crit(tmp_path, scenario, *extra):
    return main(["criterion", scenario, "--seed", "7", "--out", str(tmp_path), *extra])


def test_criterion_passes_on_composite(tmp_path, capsys):
    assert crit(tmp_path, "composite") == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["pass"] and report["permutations"] == 5
    assert json.loads((tmp_path / "criterion.json").read_text()) == report
    assert len((tmp_path / "alignment.jsonl").read_text().splitlines()) == 5


def test_criterion_ablations(tmp_path, capsys):
    assert crit(tmp_path / "a", "composite", "--no-recall") == EXIT_CRITERION
    assert "no recall-objects" in json.loads(capsys.readouterr().out)["reasons"]
    assert crit(tmp_path / "b", "composite", "--randomize-recall") == EXIT_INTEGRITY
    assert crit(tmp_path / "c", "adversarial_recall_flag") == EXIT_CRITERION


def test_criterion_config_errors(tmp_path):
    assert crit(tmp_path, "composite", "--permutations", "0") == EXIT_CONFIG
    assert crit(tmp_path, "valence_chain") == EXIT_CONFIG


def test_load_and_range_errors(tmp_path):
    assert run(tmp_path, str(tmp_path / "missing.json"), "--seed", "1") == EXIT_LOAD
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    assert run(tmp_path, str(bad), "--seed", "1") == EXIT_LOAD
    assert run(tmp_path, "football", "--seed", "1", "--gamma", "1.5") == EXIT_CONFIG


def test_seed_is_mandatory(tmp_path):
    with pytest.raises(SystemExit) as e:
        run(tmp_path, "football")
    assert e.value.code == 2


@pytest.mark.parametrize("cmd", [[], ["run"], ["probe"], ["criterion"], ["mine"], ["report"]])
def test_help_documents_exit_codes(cmd, capsys):
    with pytest.raises(SystemExit) as e:
        main([*cmd, "--help"])
    assert e.value.code == 0
    text = capsys.readouterr().out
    for code in (EXIT_OK, EXIT_CRITERION, EXIT_CONFIG, EXIT_LOAD, EXIT_QUERY, EXIT_INTEGRITY):
        assert f"  {code}  " in text
    assert "ROOMAGENT_OUT" in text


def test_env_var_sets_default_output(tmp_path, monkeypatch):
    monkeypatch.setenv("ROOMAGENT_OUT", str(tmp_path / "env"))
    assert main(["run", "football", "--seed", "7", "--ticks", "20"]) == EXIT_OK
    assert (tmp_path / "env" / "summary.json").exists()


def test_report_writes_figures(rect_run, tmp_path, capsys):
    assert main(["report", str(rect_run), "--out", str(tmp_path)]) == EXIT_OK
    for name in ("rule_counts.png", "priorities.png"):
        assert (tmp_path / name).read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_report_is_deterministic(rect_run, tmp_path):
    main(["report", str(rect_run), "--out", str(tmp_path / "a")])
    main(["report", str(rect_run), "--out", str(tmp_path / "b")])
    assert files(tmp_path / "a") == files(tmp_path / "b")


def test_mine_reproduces_the_run(tmp_path, capsys):
    run_dir = tmp_path / "run"
    assert main(["run", "valence_chain", "--seed", "1", "--ticks", "70", "--out", str(run_dir)]) == EXIT_OK
    capsys.readouterr()
    assert main(["mine", str(run_dir)]) == EXIT_OK
    mined = capsys.readouterr().out
    assert mined and all(json.loads(x)["support"] >= 3 for x in mined.splitlines())
    assert main(["mine", str(run_dir), "--budget", "1", "--out", str(tmp_path / "r.jsonl")]) == EXIT_OK
    info = json.loads(capsys.readouterr().out)
    assert info["passes"][0] == [[0]]  # s1, the valenced signal, is expanded first
    assert {json.loads(x)["id"] for x in mined.splitlines()} == \
        {json.loads(x)["id"] for x in (tmp_path / "r.jsonl").read_text().splitlines()}


def test_module_entry_point(tmp_path):
    p = subprocess.run([sys.executable, "-m", "roomagent", "run", "football", "--seed", "7", "--ticks", "10",
                        "--out", str(tmp_path)], capture_output=True, text=True)
    assert p.returncode == 0 and (tmp_path / "summary.json").exists()


def test_criterion_outputs_are_deterministic_and_job_independent(tmp_path, capsys):
    assert crit(tmp_path / "a", "composite") == EXIT_OK
    assert crit(tmp_path / "b", "composite", "--jobs", "2") == EXIT_OK
    assert files(tmp_path / "a") == files(tmp_path / "b")
