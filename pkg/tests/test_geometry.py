from fractions import Fraction

import pytest

from multisym.bundle import FieldFamily, Slot, build_tower
from multisym.exterior import d, one_form, volume, volume_minus, wedge
from multisym.geometry import (
    GeometryError,
    HamiltonianTheory,
    LagrangianTheory,
    WrongSpace,
    hamiltonize,
    kernel_dimension,
    legendre,
    liouville_forms,
    pullback_matches,
)
from multisym.symkernel import ZERO, Expr, Symbol

ETA = (-1, 1, 1, 1)
MASS = Expr.atom(Symbol("param", "m", ()))


@pytest.mark.parametrize("m, n", [(1, 1), (2, 1), (2, 3), (3, 2)])
def test_liouville_forms_are_exact_pair(m, n):
    slots = () if n == 1 else (Slot("k", n, "^"),)
    tower = build_tower(m, [FieldFamily("y", slots)])
    chart = tower.chart("MPI")
    theta, omega = liouville_forms(chart)
    assert (omega + d(theta)).is_zero()
    assert theta.coefficient(tower.base) == Expr.atom(tower.pscalar)
    y = tower.fields[0]
    expected = wedge(one_form(chart, y, Expr.atom(tower.momentum(y, 0))), volume_minus(chart, 0))
    assert all(theta.terms[k] == v for k, v in expected.terms.items())


def test_klein_gordon_lagrangian_side(kg):
    tower = kg.tower
    phi = tower.fields[0]
    lag = kg.require_lagrangian()
    jets = [Expr.atom(tower.jet(phi, mu)) for mu in range(4)]
    energy = sum((j * j * Fraction(-ETA[mu], 2) for mu, j in enumerate(jets)), ZERO) \
        + MASS ** 2 * Expr.atom(phi) ** 2 * Fraction(1, 2)
    assert lag.energy == energy
    assert lag.is_regular and lag.hessian_rank == 4
    assert (lag.omega + d(lag.theta)).is_zero()


def test_klein_gordon_legendre_and_hamiltonian(kg):
    tower = kg.tower
    phi = tower.fields[0]
    lmap = legendre(kg.require_lagrangian())
    assert lmap.regular
    for mu in range(4):
        assert lmap.momenta[tower.momentum(phi, mu)] == Expr.atom(tower.jet(phi, mu)) * (-ETA[mu])
    ham = hamiltonize(kg.require_lagrangian())
    moms = [Expr.atom(tower.momentum(phi, mu)) for mu in range(4)]
    expected = sum((p * p * Fraction(-ETA[mu], 2) for mu, p in enumerate(moms)), ZERO) \
        + MASS ** 2 * Expr.atom(phi) ** 2 * Fraction(1, 2)
    assert ham.hamiltonian == expected
    assert not ham.singular
    assert pullback_matches(ham, kg.require_lagrangian())


def test_einstein_cartan_is_totally_singular(einstein_cartan):
    lag = einstein_cartan.require_lagrangian()
    assert lag.hessian_rank == 0
    lmap = einstein_cartan.legendre_map
    assert not lmap.regular and len(lmap.primary) == 160
    ham = einstein_cartan.hamiltonian_theory
    assert ham.singular and ham.chart.dim == 44
    with pytest.raises(GeometryError):
        einstein_cartan.forms("J1STAR")


def test_polyakov_primary_constraints(polyakov):
    lmap = polyakov.legendre_map
    assert not lmap.regular
    metric_momenta = [q for q in lmap.primary if q.family == "g"]
    assert len(metric_momenta) == len(lmap.primary) == 6
    assert all(v.is_zero() for v in lmap.primary.values())
    assert kernel_dimension(polyakov.hamiltonian_theory.omega) > 0


def test_rejects_densities_on_wrong_space():
    tower = build_tower(2, [FieldFamily("phi")])
    phi = tower.fields[0]
    with pytest.raises(WrongSpace):
        LagrangianTheory(tower, Expr.atom(tower.momentum(phi, 0)))
    with pytest.raises(WrongSpace):
        HamiltonianTheory(tower.chart("J1STAR"), Expr.atom(tower.jet(phi, 0)))
    with pytest.raises(WrongSpace):
        HamiltonianTheory(tower.chart("J1"), Expr.atom(phi))


def test_hamiltonian_section_sets_pscalar():
    tower = build_tower(2, [FieldFamily("phi")])
    phi = tower.fields[0]
    ham = HamiltonianTheory(tower.chart("J1STAR"), Expr.atom(phi) ** 2)
    section = ham.section()
    assert section.images[tower.pscalar] == -(Expr.atom(phi) ** 2)
    assert ham.theta.coefficient(tower.base) == -(Expr.atom(phi) ** 2)
    assert volume(tower.chart("J1STAR")).degree == 2
