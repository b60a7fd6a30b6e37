import copy
import json
from fractions import Fraction
from importlib.resources import files

import jsonschema
import numpy as np
import pytest

from walksat_lab import make_rng
from walksat_lab.cli import main
from walksat_lab.formula import Formula, generate_uniform
from walksat_lab.harness import (
    ExperimentConfig,
    ScriptError,
    _first_flip_batch,
    clause_count,
    compare_traces,
    density,
    drift,
    first_flip_breaks,
    initial_unsat_stats,
    load_choice_script,
    parallel_map,
    replay,
    sweep,
    sweep_csv,
    trace_schema,
    validate_trace,
    wilson_interval,
)
from walksat_lab.pi_process import ProcessParams
from walksat_lab.walksat import SolverTracker

DATA = files("walksat_lab").joinpath("data")
CNF = str(DATA.joinpath("example.cnf"))
SCRIPT = str(DATA.joinpath("example_choices.json"))
EXPECTED = str(DATA.joinpath("example_expected.json"))


def cli(capsys, *args):
    code = main(list(args))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_density_and_clause_count():
    assert density(5) == Fraction(32, 125)
    assert density(5, rho=Fraction(1, 10)) == Fraction(32, 50)
    assert density(3, r=Fraction(21, 5)) == Fraction(21, 5)
    assert clause_count(10_000, density(7)) == 7315
    with pytest.raises(ValueError):
        density(3, r=Fraction(1), rho=Fraction(1))
    with pytest.raises(ValueError):
        density(3, r=Fraction(0))


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(trials=0)
    with pytest.raises(ValueError):
        ExperimentConfig(mode="dance")


def test_wilson_interval():
    lo, hi = wilson_interval(0, 1)
    assert lo == 0.0 and 0 < hi < 1
    lo, hi = wilson_interval(50, 100)
    assert lo < 0.5 < hi and 0 <= lo and hi <= 1


def test_first_flip_batch_matches_tracker():
    batch = np.stack([generate_uniform(30, 40, 3, seed=s).lits for s in range(200)])
    got = _first_flip_batch(batch, make_rng(9))
    # replay the same choices through the tracker
    rng = make_rng(9)
    for b in range(batch.shape[0]):
        f = Formula(30, 3, batch[b])
        t = SolverTracker.from_formula(f)
        unsat = sorted(t.unsat)
        if not unsat:
            assert got[b] == -1
            continue
        i = unsat[int(rng.integers(len(unsat)))]
        j = int(rng.integers(3))
        _, broken = t.flip(abs(int(batch[b, i, j])))
        assert broken == got[b]


def test_first_flip_small_run():
    out = first_flip_breaks(5, 2000, 512, 2000, seed=1)
    assert out["used"] > 1900
    assert abs(out["mean"] - out["expected"]) < 5 * out["standard_error"]


def test_initial_unsat_stats():
    out = initial_unsat_stats(4, 100, 400, 200, seed=2)
    assert out["expected_mean"] == 25
    assert abs(out["mean"] - 25) < 4 * out["standard_error"]


def test_choice_script_parsing():
    assert load_choice_script('[{"t": 1, "i": 2, "j": 3}]') == [(1, 2)]
    assert load_choice_script("[]") == []
    for bad in ('{"t": 1}', '[{"t": 2, "i": 1, "j": 1}]', '[{"t": 1, "i": 0, "j": 1}]',
                '[{"t": 1, "i": 1}]', "nope", '[{"t": 1, "i": 1.5, "j": 1}]'):
        with pytest.raises(ScriptError):
            load_choice_script(bad)


def test_compare_traces():
    a = {"header": {"T": 4}, "records": [{"t": 1, "a_set": [1]}, {"t": 2}]}
    assert compare_traces(a, {"header": {"T": 4}}) is None
    bad = compare_traces(a, {"records": [{"t": 1, "a_set": [2]}, {"t": 2}]})
    assert bad.path == "records[0].a_set[0]"
    assert compare_traces(a, {"records": [{"t": 1}]}).path == "records.length"
    assert compare_traces(a, {"missing": 1}).path == "missing"
    assert compare_traces({"x": True}, {"x": 1}) is not None


def test_replay_example_matches_expected():
    from walksat_lab.harness import load_formula

    f = load_formula(CNF)
    expected = json.loads(DATA.joinpath("example_expected.json").read_text())
    params = ProcessParams.for_instance(5, 10, k1=2, lam=2)
    doc, mismatch = replay(f, load_choice_script(DATA.joinpath("example_choices.json").read_text()),
                           params, expected=expected)
    assert mismatch is None
    assert doc["header"]["T"] == 4
    tampered = copy.deepcopy(expected)
    tampered["records"][2]["z_set"] = [1]
    _, mismatch = replay(f, load_choice_script(DATA.joinpath("example_choices.json").read_text()),
                         params, expected=tampered)
    assert mismatch.path == "records[2].z_set.length"


def test_trace_schema_rejects_garbage():
    with pytest.raises(jsonschema.ValidationError):
        validate_trace({"header": {}, "records": []})
    assert trace_schema()["$id"].startswith("urn:")


def test_cli_replay(capsys, tmp_path):
    code, out, _ = cli(capsys, "replay", "--formula", CNF, "--script", SCRIPT, "--k1", "2", "--lambda", "2",
                       "--expected", EXPECTED)
    assert code == 0
    doc = json.loads(out)
    validate_trace(doc)
    assert doc["header"]["final"] == {"a_set": [7], "n_set": [1, 2, 3, 4, 5, 6], "z_set": [1, 4]}
    tampered = json.loads(DATA.joinpath("example_expected.json").read_text())
    tampered["header"]["T"] = 5
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(tampered))
    code, _, err = cli(capsys, "replay", "--formula", CNF, "--script", SCRIPT, "--k1", "2", "--lambda", "2",
                       "--expected", str(path))
    assert code == 1 and "header.T" in err


def test_cli_replay_invalid_choice_names_step(capsys, tmp_path):
    path = tmp_path / "s.json"
    path.write_text('[{"t": 1, "i": 1, "j": 5}, {"t": 2, "i": 1, "j": 1}]')
    code, _, err = cli(capsys, "replay", "--formula", CNF, "--script", str(path))
    assert code == 2 and "step 2" in err


def test_cli_replay_empty_script_satisfied_start(capsys, tmp_path):
    cnf = tmp_path / "sat.cnf"
    cnf.write_text("p cnf 2 2\n1 2 0\n1 -2 0\n")
    script = tmp_path / "s.json"
    script.write_text("[]")
    code, out, _ = cli(capsys, "replay", "--formula", str(cnf), "--script", str(script))
    assert code == 0 and json.loads(out)["header"]["T"] == 0


def test_cli_solve_fixtures(capsys, tmp_path):
    sat = tmp_path / "sat.cnf"
    sat.write_text("p cnf 2 2\n1 2 0\n1 -2 0\n")
    code, out, _ = cli(capsys, "solve", "--formula", str(sat))
    doc = json.loads(out)
    assert code == 0 and doc["results"][0]["flips"] == 0 and doc["results"][0]["assignment"] == "11"
    code, out, _ = cli(capsys, "solve", "--formula", CNF, "--tmax", "0")
    assert code == 1 and json.loads(out)["results"][0]["outcome"] == "failure"


def test_cli_bad_input(capsys, tmp_path):
    bad = tmp_path / "bad.cnf"
    bad.write_text("p cnf 2 1\n1 3 0\n")
    assert cli(capsys, "solve", "--formula", str(bad))[0] == 2
    assert cli(capsys, "drift", "--format", "csv")[0] == 2
    assert cli(capsys, "replay", "--formula", CNF)[0] == 2
    with pytest.raises(SystemExit):
        main(["sweep", "--r", "abc"])


def test_sweep_rows_and_csv():
    cfg = ExperimentConfig(mode="sweep", k=4, n=200, densities=(density(4), density(4, rho=Fraction(1, 5))),
                           trials=1, seed=4)
    rows = sweep(cfg)
    assert all(r.success_rate in (0.0, 1.0) for r in rows)
    assert all(0 <= r.wilson_low <= r.wilson_high <= 1 for r in rows)
    text = sweep_csv(rows)
    assert text.splitlines()[0] == "# schema: walksat-lab-sweep/1"
    assert text.splitlines()[1].startswith("k,n,m,r,rho,trials,successes")


def test_drift_empty_report():
    cfg = ExperimentConfig(mode="drift", k=3, n=50, densities=(Fraction(1, 100),), trials=3)
    out = drift(cfg)
    assert out["empty"] is True and out["steps"] == 0


def test_parallel_map_order():
    assert parallel_map(abs, [-3, 1, -2], threads=2) == [3, 1, 2]


VERB_ARGS = [
    ["solve", "--k", "4", "--n", "300", "--trials", "3", "--seed", "5"],
    ["instrument", "--k", "4", "--n", "300", "--seed", "5"],
    ["sweep", "--k", "4", "--n", "200", "--rho", "0.04,0.2", "--trials", "4", "--seed", "5"],
    ["sweep", "--k", "4", "--n", "200", "--rho", "0.04", "--trials", "2", "--format", "json"],
    ["drift", "--k", "5", "--n", "500", "--trials", "4", "--seed", "5"],
    ["bounds", "--k", "5", "--n", "500", "--trials", "4", "--seed", "5"],
    ["lazy-equivalence", "--k", "4", "--n", "100", "--trials", "50", "--seed", "5"],
    ["replay", "--formula", CNF, "--script", SCRIPT, "--k1", "2", "--lambda", "2"],
]


@pytest.mark.parametrize("args", VERB_ARGS, ids=lambda a: a[0])
def test_cli_byte_determinism(args, tmp_path, monkeypatch):
    outs = []
    for threads in ("1", "1", "2"):
        monkeypatch.setenv("WALKSAT_LAB_THREADS", threads)
        path = tmp_path / f"out{len(outs)}"
        assert main(args + ["--out", str(path)]) in (0, 1)
        outs.append(path.read_bytes())
    assert outs[0] == outs[1] == outs[2]
