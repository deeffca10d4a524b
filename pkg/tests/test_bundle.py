import pytest

from multisym.bundle import (
    BundleError,
    CircularConstraint,
    ChartMap,
    DuplicateFieldName,
    FieldFamily,
    IncompleteMap,
    Slot,
    UnknownCoordinate,
    ZeroDimensionalBase,
    build_tower,
    embedding,
    restrict,
)
from multisym.symkernel import Expr

SPACETIME = Slot("spacetime", 4, "_")
LORENTZ_UP = Slot("lorentz", 4, "^")


def einstein_cartan_families():
    tetrad = FieldFamily("e", (LORENTZ_UP, SPACETIME))
    spin = FieldFamily("omega", (LORENTZ_UP, LORENTZ_UP, SPACETIME), ((0, 1, "anti"),))
    return [tetrad, spin]


def test_einstein_cartan_dimensions():
    tower = build_tower(4, einstein_cartan_families())
    assert tower.n == 16 + 24
    assert tower.chart("E").dim == 44
    assert tower.chart("J1").dim == 4 + 40 + 160
    assert tower.chart("MPI").dim == 4 + 40 + 160 + 1
    assert tower.chart("J1STAR").dim == 204


def test_symmetric_family_weights_and_signs():
    metric = FieldFamily("g", (Slot("a", 2, "^"), Slot("a", 2, "^")), ((0, 1, "sym"),))
    assert metric.components() == [(0, 0), (0, 1), (1, 1)]
    assert [metric.weight(i) for i in metric.components()] == [1, 2, 1]
    assert metric.canonical((1, 0)) == (1, (0, 1))
    anti = FieldFamily("w", (Slot("a", 3, "^"), Slot("a", 3, "^")), ((0, 1, "anti"),))
    assert anti.canonical((2, 1)) == (-1, (1, 2))
    assert anti.canonical((1, 1)) == (0, None)
    assert len(anti.components()) == 3


def test_tower_field_lookup_resolves_signs():
    tower = build_tower(4, einstein_cartan_families())
    sign, sym = tower.field("omega", (1, 0, 2))
    assert sign == -1 and sym.index == (0, 1, 2)
    assert tower.field("omega", (2, 2, 0)) == (0, None)


def test_coordinate_symbols_are_shared_between_charts():
    tower = build_tower(2, [FieldFamily("phi")])
    phi = tower.fields[0]
    assert phi in tower.chart("E").coords and phi in tower.chart("MPI").coords
    assert tower.chart("J1") is tower.chart("J1")
    assert tower.chart("MPI").pscalar == tower.pscalar


@pytest.mark.parametrize("families, error", [
    ([FieldFamily("phi"), FieldFamily("phi")], DuplicateFieldName),
    ([FieldFamily("x")], DuplicateFieldName),
    ([FieldFamily("p")], DuplicateFieldName),
])
def test_rejects_bad_families(families, error):
    with pytest.raises(error):
        build_tower(2, families)


def test_rejects_zero_dimensional_base():
    with pytest.raises(ZeroDimensionalBase):
        build_tower(0, [FieldFamily("phi")])


def test_rejects_bad_symmetry_declarations():
    with pytest.raises(ValueError):
        FieldFamily("g", (Slot("a", 2), Slot("b", 3)), ((0, 1, "sym"),))
    with pytest.raises(ValueError):
        FieldFamily("g", (Slot("a", 2), Slot("a", 2)), ((0, 1, "skew"),))
    with pytest.raises(ValueError):
        Slot("a", 0)


def test_projections_compose():
    tower = build_tower(2, [FieldFamily("phi")])
    j1_to_e = tower.projection("J1", "E")
    e_to_m = tower.projection("E", "M")
    assert j1_to_e.then(e_to_m).same_as(tower.projection("J1", "M"))
    with pytest.raises(BundleError):
        tower.projection("E", "J1")


def test_chart_map_validation():
    tower = build_tower(2, [FieldFamily("phi")])
    e, j1 = tower.chart("E"), tower.chart("J1")
    with pytest.raises(IncompleteMap):
        ChartMap(e, e, {tower.base[0]: Expr.atom(tower.base[0])})
    jet = tower.jet(tower.fields[0], 0)
    images = {c: Expr.atom(c) for c in e.coords}
    images[tower.fields[0]] = Expr.atom(jet)
    with pytest.raises(UnknownCoordinate):
        ChartMap(e, e, images)
    ChartMap(j1, e, images)


def test_restriction_and_embedding():
    tower = build_tower(2, [FieldFamily("phi", (Slot("k", 2, "^"),))])
    star = tower.chart("J1STAR")
    p0 = tower.momentum(tower.fields[0], 0)
    psub = restrict(star, {p0: Expr.atom(tower.fields[1])})
    assert p0 not in psub.coords and psub.dim == star.dim - 1
    emb = embedding(psub)
    assert emb.images[p0] == Expr.atom(tower.fields[1])
    assert emb.target is star


def test_restriction_rejects_circular_constraints():
    tower = build_tower(2, [FieldFamily("phi")])
    star = tower.chart("J1STAR")
    p0, p1 = (tower.momentum(tower.fields[0], mu) for mu in range(2))
    with pytest.raises(CircularConstraint):
        restrict(star, {p0: Expr.atom(p1), p1: Expr.atom(tower.base[0])})
    with pytest.raises(BundleError):
        restrict(tower.chart("E"), {})
