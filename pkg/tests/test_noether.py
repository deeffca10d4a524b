from multisym.exterior import VectorField
from multisym.noether import (
    conservation_residual,
    find_gauge_fields,
    in_kernel_span,
    momentum_map,
    verify_symmetry,
)

from suites import check_exact_implies_cartan


def test_exact_implies_cartan_on_random_fields():
    cases, exact = check_exact_implies_cartan(80)
    assert cases == 80 and exact > 0


def test_klein_gordon_symmetries(kg):
    for name in ("translation", "lorentz"):
        for space in ("J1", "MPI", "J1STAR"):
            verdict = verify_symmetry(kg, kg.lift(name, space), space, name)
            assert verdict.exact and verdict.cartan and verdict.natural
            J = momentum_map(kg, kg.lift(name, space), space, name)
            assert J.closure_residual.is_zero()
        assert verify_symmetry(kg, kg.lift(name, "E"), "E", name).lagrangian_invariant


def test_translation_current_is_conserved_on_shell(kg):
    J = momentum_map(kg, kg.lift("translation", "J1STAR"), "J1STAR", "translation")
    report = kg.constraint_report("hamiltonian")
    _, conserved = conservation_residual(J.form, report.field_equations)
    assert conserved


def test_weyl_momentum_map_vanishes(polyakov):
    for space in ("J1", "P0"):
        J = momentum_map(polyakov, polyakov.lift("weyl", space), space, "weyl")
        assert J.form.is_zero()


def test_zero_vector_field_is_exact_with_zero_current(kg):
    chart = kg.chart("J1")
    Y = VectorField(chart, {})
    verdict = verify_symmetry(kg, Y, "J1")
    assert verdict.exact and verdict.cartan
    assert momentum_map(kg, Y, "J1").form.is_zero()


def test_einstein_cartan_diffeomorphisms_are_exact(einstein_cartan):
    for space in ("J1", "P0"):
        verdict = verify_symmetry(einstein_cartan, einstein_cartan.lift("diffeo", space), space, "diffeo")
        assert verdict.exact


def test_polyakov_gauge_kernel_contains_weyl(polyakov):
    report = find_gauge_fields(polyakov)
    assert report.kernel
    assert in_kernel_span(report, polyakov.lift("weyl", "P0"))
