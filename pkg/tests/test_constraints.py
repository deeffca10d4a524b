import pytest

from multisym.constraints import (
    IterationCapExceeded,
    derivative_marker,
    on_sections,
    run_constraint_algorithm,
)
from multisym.symkernel import Expr


def test_klein_gordon_has_empty_stages(kg):
    for side in ("lagrangian", "hamiltonian"):
        report = kg.constraint_report(side)
        assert report.status == "converged"
        assert not report.compatibility and not report.sopde and not report.final


def test_klein_gordon_hamiltonian_section_equations(kg):
    tower = kg.tower
    phi = tower.fields[0]
    mass = Expr.atom(next(p for p in tower.params if p.name == "m"))
    equations = on_sections(kg.constraint_report("hamiltonian"))
    divergence = sum((Expr.atom(derivative_marker(tower.momentum(phi, mu), (mu,))) for mu in range(4)),
                     mass ** 2 * Expr.atom(phi))
    assert divergence in equations


def test_polyakov_single_compatibility_family(polyakov):
    report = polyakov.constraint_report("lagrangian")
    assert set(report.families("compatibility")) == {"g"}
    assert len(report.compatibility) == 2
    assert not report.sopde
    assert all(not rnd for rnd in report.tangency)


def test_einstein_cartan_lagrangian_stages(einstein_cartan):
    report = einstein_cartan.constraint_report("lagrangian")
    assert not report.compatibility
    assert {k: len(v) for k, v in report.families("sopde").items()} == {"e": 16, "omega": 24}
    assert all(not rnd for rnd in report.tangency)


def test_einstein_cartan_hamiltonian_side_has_no_compatibility(einstein_cartan):
    report = einstein_cartan.constraint_report("hamiltonian")
    assert not report.compatibility and not report.final


def test_iteration_cap(polyakov):
    with pytest.raises(IterationCapExceeded):
        run_constraint_algorithm(polyakov.hamiltonian_theory.omega, "hamiltonian", 0)


def test_derivative_marker_names(kg):
    phi = kg.tower.fields[0]
    assert derivative_marker(phi, (1,)).name == "d[1](phi)"
    assert derivative_marker(phi, (0, 2)).name == "d[0,2](phi)"
    assert derivative_marker(phi, (2, 0)) == derivative_marker(phi, (0, 2))
