import json
from pathlib import Path

import pytest

from cartaneq.cli import main
from cartaneq.engine import Policy, run_loop
from cartaneq.problems import ProblemFileError, load_problem, parse_problem_text
from cartaneq.report import REPORT_SCHEMA, result_to_dict, result_to_json

PROBLEMS = Path(__file__).parent.parent / "problems"


def test_load_lagrangian():
    problem, policy = load_problem(PROBLEMS / "lagrangian.prob")
    assert problem.n == 3
    assert problem.group.r == 5
    assert policy.max_loops == 8
    assert problem.title == "lagrangian-divergence"


def test_load_flat_gl2():
    problem, policy = load_problem(PROBLEMS / "flat_gl2.prob")
    assert problem.n == 2 and problem.group.r == 4


def test_validation_rejects_singular_coframe():
    text = """
[coordinates]
names = x, y
[coframe]
A 1 1 = x
A 1 2 = 0
A 2 1 = x
A 2 2 = 0
[group]
params =
M 1 1 = 1
M 1 2 = 0
M 2 1 = 0
M 2 2 = 1
"""
    from cartaneq.problems import validate_problem

    problem, policy = parse_problem_text(text)
    with pytest.raises(ProblemFileError) as err:
        validate_problem(problem, policy)
    assert "determinant" in str(err.value)


def test_validation_rejects_bad_identity():
    text = """
[coordinates]
names = x, y
[coframe]
A 1 1 = 1
A 1 2 = 0
A 2 1 = 0
A 2 2 = 1
[group]
params = a
M 1 1 = a
M 1 2 = 0
M 2 1 = 0
M 2 2 = 1
identity a = 2
"""
    from cartaneq.problems import validate_problem

    problem, policy = parse_problem_text(text)
    with pytest.raises(ProblemFileError):
        validate_problem(problem, policy)


def test_parse_errors_have_line_numbers():
    text = "[coordinates]\nnames = x\n[coframe]\nbogus line here\n[group]\nparams =\nM 1 1 = 1\n"
    with pytest.raises(ProblemFileError) as err:
        parse_problem_text(text)
    assert err.value.line == 4


def test_cli_run_exit_codes(tmp_path):
    assert main(["run", str(PROBLEMS / "flat_gl2.prob")]) == 0
    assert main(["run", str(PROBLEMS / "toy_diag.prob")]) == 0
    assert main(["run", str(PROBLEMS / "toy_genuine.prob")]) == 2
    assert main(["run", str(PROBLEMS / "toy_diag.prob"), "--max-loops", "0"]) == 3
    assert main(["run", str(tmp_path / "missing.prob")]) == 1


def test_cli_check_and_characters():
    assert main(["check", str(PROBLEMS / "lagrangian.prob")]) == 0
    assert main(["characters", str(PROBLEMS / "flat_gl2.prob")]) == 0


def test_cli_crosscheck():
    assert main(["crosscheck", str(PROBLEMS / "toy_diag.prob")]) == 0
    assert main(["crosscheck", str(PROBLEMS / "flat_identity.prob")]) == 0


def test_cli_crosscheck_detects_corrupted_membership(tmp_path):
    # dropping the g22 = 1 membership equation keeps the sampled closure
    # check happy (products do satisfy the remaining equations) but encodes
    # a larger pseudo-group, so the two routes disagree
    text = (PROBLEMS / "toy_diag.prob").read_text()
    text += "\n[membership]\neq = g12\neq = g21\n"
    bad = tmp_path / "bad.prob"
    bad.write_text(text)
    assert main(["crosscheck", str(bad)]) == 1


def test_report_determinism(tmp_path):
    out1 = tmp_path / "r1.json"
    out2 = tmp_path / "r2.json"
    assert main(["run", str(PROBLEMS / "toy_diag.prob"), "--seed", "0", "--json", str(out1)]) == 0
    assert main(["run", str(PROBLEMS / "toy_diag.prob"), "--seed", "0", "--json", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_report_schema_and_roundtrip():
    jsonschema = pytest.importorskip("jsonschema")
    problem, policy = load_problem(PROBLEMS / "toy_diag.prob")
    result = run_loop(problem, policy)
    doc = result_to_dict(result)
    jsonschema.validate(doc, REPORT_SCHEMA)
    # serialization round-trips losslessly
    assert json.loads(result_to_json(result)) == doc
    for loop in doc["loops"]:
        assert "characters" in loop and "r2" in loop["characters"]
        assert isinstance(loop["characters"]["involutive"], bool)


def test_report_schema_on_lagrangian():
    jsonschema = pytest.importorskip("jsonschema")
    problem, policy = load_problem(PROBLEMS / "lagrangian.prob")
    result = run_loop(problem, policy)
    jsonschema.validate(result_to_dict(result), REPORT_SCHEMA)
    assert result.outcome == "involutive"
