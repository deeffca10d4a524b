import pytest

from multisym.bundle import FieldFamily, build_tower
from multisym.exterior import DiffForm, d, one_form, volume, wedge
from multisym.multivec import MultiVectorField, contract_multi, factor_derivative, lie_multi
from multisym.symkernel import Expr


def test_transversality_normalization():
    tower = build_tower(2, [FieldFamily("phi")])
    chart = tower.chart("E")
    X = MultiVectorField(chart, [{}, {}])
    assert contract_multi(X, volume(chart)).terms[()] == Expr.const(1)
    with pytest.raises(ValueError):
        MultiVectorField(chart, [{tower.base[0]: 1}, {}])
    with pytest.raises(ValueError):
        MultiVectorField(chart, [{}])


def test_general_multivector_has_one_unknown_per_fiber_slot():
    tower = build_tower(2, [FieldFamily("phi")])
    chart = tower.chart("MPI")
    X = MultiVectorField.general(chart)
    assert len(X.unknowns()) == 2 * len(chart.fiber_coords())
    phi = tower.fields[0]
    fixed = MultiVectorField.general(chart, [{phi: Expr.atom(tower.jet(phi, 0))}, {}])
    assert len(fixed.unknowns()) == 2 * len(chart.fiber_coords()) - 1


def test_contraction_order_and_lie_derivative():
    tower = build_tower(2, [FieldFamily("phi")])
    chart = tower.chart("E")
    phi = tower.fields[0]
    x0, x1 = tower.base
    X = MultiVectorField(chart, [{phi: Expr.atom(x1)}, {}])
    form = wedge(one_form(chart, phi), one_form(chart, x1))
    # i(X_1) i(X_0) (dphi ^ dx1) = X_0(phi) X_1(x1) - X_0(x1) X_1(phi)
    assert contract_multi(X, form).terms[()] == Expr.atom(x1)
    assert factor_derivative(X, 0, Expr.atom(phi)) == Expr.atom(x1)
    zero_form = DiffForm.function(chart, Expr.atom(phi) * Expr.atom(x0))
    one = d(zero_form)
    assert lie_multi(X, one).is_zero() or lie_multi(X, one).degree == 0
