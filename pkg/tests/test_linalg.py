import pytest

from multisym.linalg import (
    ConstraintBasis,
    InconsistentSystem,
    Row,
    generic_rank,
    in_span,
    make_row,
    nullspace,
    solve_linear,
    top_layer,
)
from multisym.symkernel import ZERO, Expr, Symbol

U = [Symbol("unknown", "u", (i,)) for i in range(3)]
X = Symbol("base", "x", (0,))
P = [Symbol("momentum", "q", (i,)) for i in range(2)]
A = Symbol("param", "a", ())


def atom(s):
    return Expr.atom(s)


def test_unit_pivots_solve_square_system():
    rows = [make_row(atom(U[0]) + atom(U[1]) - 1, U, "r0", "f"),
            make_row(atom(U[0]) - atom(U[1]) - 3, U, "r1", "f")]
    result = solve_linear(rows)
    assert result.bindings[U[0]] == Expr.const(2) or result.bindings.get(U[1]) == Expr.const(-1)
    values = {u: result.bindings[u] for u in U[:2]}
    assert values == {U[0]: Expr.const(2), U[1]: Expr.const(-1)}
    assert not result.candidates and not result.equations


def test_unknown_free_remainders_become_candidates():
    rows = [make_row(atom(U[0]) + atom(X), U, "r0", "f"),
            make_row(2 * atom(U[0]) + atom(X) ** 2, U, "r1", "f")]
    result = solve_linear(rows)
    assert len(result.candidates) == 1
    cand = result.candidates[0].expr()
    assert cand == atom(X) ** 2 - 2 * atom(X) or cand == 2 * atom(X) - atom(X) ** 2


def test_generic_rank_and_nullspace():
    rows = [Row("r0", "f", {U[0]: atom(X), U[1]: Expr.const(1)}, ZERO),
            Row("r1", "f", {U[0]: 2 * atom(X), U[1]: Expr.const(2)}, ZERO)]
    assert generic_rank(rows, U[:2]) == 1
    basis, _ = nullspace(rows, U[:2])
    assert len(basis) == 1
    vec = basis[0]
    assert (atom(X) * vec.get(U[0], ZERO) + vec.get(U[1], ZERO)).is_zero()


def test_span_membership_over_function_coefficients():
    c0 = atom(P[0]) - atom(X)
    c1 = atom(P[1]) * atom(X)
    assert in_span((atom(X) ** 2 + 1) * c0 + atom(A) * c1, [c0, c1])
    assert not in_span(atom(P[0]) * atom(P[1]), [c0, c1])
    assert top_layer([c0, c1]) == {P[0], P[1]}


def test_constraint_basis_rejects_redundant_and_units():
    basis = ConstraintBasis()
    c = atom(P[0]) + atom(X)
    assert basis.add(c) is not None
    assert basis.add(c * atom(A)) is None
    assert basis.add(ZERO) is None
    with pytest.raises(InconsistentSystem):
        basis.add(Expr.const(3))
