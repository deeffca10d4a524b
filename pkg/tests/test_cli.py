import json
from importlib import resources
from pathlib import Path

import jsonschema
import pytest

from multisym.cli import main
from multisym.reference import fixture_text

GOLDEN = Path(__file__).parent / "golden"
SCHEMA = json.loads(resources.files("multisym").joinpath("schema/report.schema.json").read_text())


def fixture_path(tmp_path, name):
    path = tmp_path / f"{name}.thy"
    path.write_text(fixture_text(name), encoding="utf-8")
    return str(path)


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def run_json(capsys, *argv):
    code, out, _ = run(capsys, *argv, "--format=json")
    report = json.loads(out)
    jsonschema.validate(report, SCHEMA)
    return code, report


def test_schema_is_valid():
    jsonschema.Draft202012Validator.check_schema(SCHEMA)


# --- derive ------------------------------------------------------------------------------

def test_derive_klein_gordon_hamiltonian_equations(tmp_path, capsys):
    code, report = run_json(capsys, "derive", fixture_path(tmp_path, "kg"), "--side=hamiltonian")
    assert code == 0
    equations = [f["text"] for f in report["payload"]["field_equations"]]
    assert "d[0](p(phi[;0])) + d[1](p(phi[;1])) + d[2](p(phi[;2])) + d[3](p(phi[;3])) + m^2*phi" in equations
    assert report["input"]["theory"] == "klein_gordon"


def test_derive_lagrangian_side_validates(tmp_path, capsys):
    code, report = run_json(capsys, "derive", fixture_path(tmp_path, "polyakov"))
    assert code == 0
    assert report["payload"]["hessian"]["regular"] is False
    assert report["payload"]["hamiltonian"]["space"] == "P0"


def test_derive_empty_field_theory_reports_liouville_form(tmp_path, capsys):
    path = write(tmp_path, "empty.thy", "theory e { base x[2]; }\n")
    code, report = run_json(capsys, "derive", path)
    assert code == 0
    assert report["payload"]["liouville"]["theta"]["text"] == "(p) d^2x"


def test_reports_are_deterministic(tmp_path, capsys):
    path = fixture_path(tmp_path, "kg")
    first = run(capsys, "derive", path, "--format=json")[1]
    second = run(capsys, "derive", path, "--format=json")[1]
    assert first == second


@pytest.mark.parametrize("golden, argv", [
    ("kg_derive_hamiltonian.json", ["derive", "{kg}", "--side=hamiltonian", "--format=json"]),
    ("kg_derive_lagrangian.txt", ["derive", "{kg}"]),
    ("polyakov_constraints.txt", ["constraints", "{polyakov}"]),
    ("polyakov_weyl_p0.json", ["noether", "{polyakov}", "--generator=weyl", "--space=P0", "--format=json"]),
    ("kg_derive_latex.tex", ["derive", "{kg}", "--format=latex"]),
])
def test_reports_match_golden_files(tmp_path, capsys, golden, argv):
    paths = {name: fixture_path(tmp_path, name) for name in ("kg", "polyakov")}
    code, out, _ = run(capsys, *[a.format(**paths) for a in argv])
    assert code == 0
    assert out == (GOLDEN / golden).read_text(encoding="utf-8")


def test_out_option_writes_file(tmp_path, capsys):
    target = tmp_path / "report.txt"
    code, out, err = run(capsys, "derive", fixture_path(tmp_path, "kg"), f"--out={target}")
    assert code == 0 and out == "" and "report written" in err
    assert target.read_text().startswith("multisym ")


def test_latex_format(tmp_path, capsys):
    code, out, _ = run(capsys, "derive", fixture_path(tmp_path, "kg"), "--format=latex")
    assert code == 0 and "\\mathrm{d}^{3}x_{0}" in out


# --- constraints -------------------------------------------------------------------------

def test_polyakov_compatibility_family(tmp_path, capsys):
    code, report = run_json(capsys, "constraints", fixture_path(tmp_path, "polyakov"), "--side=lagrangian")
    assert code == 0
    summary = report["payload"]["summary"]
    assert "2 compatibility constraints in 1 family (g)" in summary
    assert "no tangency constraints" in summary


def test_klein_gordon_constraints_are_empty(tmp_path, capsys):
    code, report = run_json(capsys, "constraints", fixture_path(tmp_path, "kg"))
    assert code == 0
    payload = report["payload"]
    assert not payload["compatibility"] and not payload["sopde"] and payload["final_count"] == 0


def test_einstein_cartan_hamiltonian_constraints(tmp_path, capsys):
    code, out, _ = run(capsys, "constraints", fixture_path(tmp_path, "einstein_cartan"), "--side=hamiltonian")
    assert code == 0
    assert "no compatibility constraints" in out
    assert "final constraint submanifold equals the starting space" in out


def test_non_positive_iteration_cap_is_rejected(tmp_path, capsys):
    code, _, err = run(capsys, "constraints", fixture_path(tmp_path, "polyakov"), "--max-iter=0")
    assert code == 1 and "--max-iter" in err


# --- noether -----------------------------------------------------------------------------

def test_weyl_momentum_map_is_zero(tmp_path, capsys):
    code, report = run_json(capsys, "noether", fixture_path(tmp_path, "polyakov"), "--generator=weyl", "--space=P0")
    assert code == 0
    entry = report["payload"]["generators"][0]
    assert entry["verdict"]["exact"] is True
    assert entry["momentum_map"]["form"]["text"] == "0"
    assert set(entry["lifts"]) == {"E", "J1", "MPI", "J1STAR", "P0"}


def test_zero_generator_is_exact_with_zero_current(tmp_path, capsys):
    path = write(tmp_path, "zero.thy", "theory z { base x[2]; field phi; lagrangian = phi[;0]^2; symmetry zero { } }\n")
    code, report = run_json(capsys, "noether", path, "--generator=zero", "--space=J1")
    assert code == 0
    entry = report["payload"]["generators"][0]
    assert entry["verdict"]["exact"] and entry["verdict"]["cartan"]
    assert entry["momentum_map"]["form"]["text"] == "0"


def test_noether_all_generators_and_non_exact_verdicts(tmp_path, capsys):
    path = write(tmp_path, "broken.thy",
                 "theory b { base x[1]; field q; lagrangian = 1/2*q[;0]^2 - 1/2*q^2; "
                 "symmetry shift { component q = 1; } symmetry time { component x[0] = 1; } }\n")
    code, report = run_json(capsys, "noether", path, "--space=J1")
    assert code == 0
    verdicts = {e["generator"]: e for e in report["payload"]["generators"]}
    assert verdicts["shift"]["verdict"]["exact"] is False and verdicts["shift"]["momentum_map"] is None
    assert verdicts["time"]["verdict"]["exact"] is True


def test_noether_on_e_reports_lagrangian_invariance(tmp_path, capsys):
    code, report = run_json(capsys, "noether", fixture_path(tmp_path, "kg"), "--generator=lorentz", "--space=E")
    assert code == 0
    entry = report["payload"]["generators"][0]
    assert entry["verdict"]["lagrangian_invariant"] is True and entry["momentum_map"] is None


# --- verify-paper ------------------------------------------------------------------------

def test_verify_filter_runs_only_matching_group(capsys):
    code, report = run_json(capsys, "verify-paper", "--filter=polyakov")
    names = [c["name"] for c in report["payload"]["checks"]]
    assert names and all(n.startswith("polyakov.") for n in names)
    assert names == sorted(names)
    assert code == (0 if report["payload"]["failed"] == 0 else 4)


def test_verify_universal_group_passes(capsys):
    code, out, _ = run(capsys, "verify-paper", "--filter=universal")
    assert code == 0
    assert "4 passed, 0 failed, 4 total" in out


def test_mass_sign_mutation_fails_specific_checks(tmp_path, capsys):
    source = fixture_text("kg").replace("+ m^2*phi^2)", "- m^2*phi^2)")
    assert source != fixture_text("kg")
    (tmp_path / "kg.thy").write_text(source)
    code, report = run_json(capsys, "verify-paper", "--filter=kg", f"--fixtures={tmp_path}")
    assert code == 4
    failed = {c["name"] for c in report["payload"]["checks"] if not c["passed"]}
    assert {"kg.euler_lagrange", "kg.hamiltonian", "kg.hdw_equations"} <= failed
    assert "kg.hessian" not in failed


def test_verify_unknown_filter_is_input_error(capsys):
    code, _, err = run(capsys, "verify-paper", "--filter=nothing-matches")
    assert code == 1 and "no checks match" in err


# --- init and exit codes -----------------------------------------------------------------

def test_init_writes_and_refuses_overwrite(tmp_path, capsys):
    target = tmp_path / "kg.thy"
    assert run(capsys, "init", "--example=kg", f"--out={target}")[0] == 0
    assert target.read_text() == fixture_text("kg")
    code, _, err = run(capsys, "init", "--example=kg", f"--out={target}")
    assert code == 1 and "--force" in err
    assert run(capsys, "init", "--example=kg", f"--out={target}", "--force")[0] == 0


@pytest.mark.parametrize("text, code", [
    ("theory T {}", 1),
    ("theory T { base x[; }", 1),
    ("theory T { base x[2]; lagrangian = psi; }", 1),
    ("theory lin { base x[2]; field phi; lagrangian = phi; }", 3),
])
def test_derive_exit_codes(tmp_path, capsys, text, code):
    path = write(tmp_path, "t.thy", text)
    assert run(capsys, "derive", path)[0] == code


def test_hamiltonian_only_theory_has_no_lagrangian_side(tmp_path, capsys):
    path = write(tmp_path, "h.thy", "theory h { base x[2]; field phi; hamiltonian = phi^2; }")
    code, _, err = run(capsys, "derive", path, "--side=lagrangian")
    assert code == 2 and "GeometryError" in err
    assert run(capsys, "derive", path, "--side=hamiltonian")[0] == 0


def test_usage_errors_exit_with_input_code(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        main(["derive"])
    assert info.value.code == 1
    assert run(capsys, "derive", str(tmp_path / "missing.thy"))[0] == 1
    assert run(capsys, "noether", fixture_path(tmp_path, "kg"), "--generator=bogus")[0] == 1


def test_rewrite_depth_variable_is_validated(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("MULTISYM_MAX_REWRITE", "abc")
    assert run(capsys, "derive", fixture_path(tmp_path, "kg"))[0] == 1
