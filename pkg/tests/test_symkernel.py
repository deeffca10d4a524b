from __future__ import annotations

import math
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from multisym.symkernel import (
    ONE,
    ZERO,
    DivisionByZero,
    Expr,
    FuncAtom,
    MetricQuantities,
    NotInvertible,
    RewriteDepthExceeded,
    Symbol,
    UnboundSymbol,
    UnknownSymbol,
    evaluate,
    exp,
    normalize,
    partial,
    strip_units,
    substitute,
)

X = [Symbol("base", "x", (i,)) for i in range(3)]
G = {(0, 0): Symbol("field", "g", (0, 0)), (0, 1): Symbol("field", "g", (0, 1)),
     (1, 1): Symbol("field", "g", (1, 1))}
METRIC = MetricQuantities(G, 2, "sqrtg", "detg")
S = Expr.atom(METRIC.sqrt_neg_det)
W = Expr.atom(METRIC.det_lower)


# --- random expression trees evaluated independently -------------------------

def tree_strategy(leaves, depth=6):
    leaf = st.one_of(st.sampled_from(leaves), st.fractions(-5, 5, max_denominator=4))
    return st.recursive(
        leaf,
        lambda kids: st.one_of(
            st.tuples(st.just("+"), kids, kids),
            st.tuples(st.just("-"), kids, kids),
            st.tuples(st.just("*"), kids, kids),
            st.tuples(st.just("^"), kids, st.integers(0, 3)),
        ),
        max_leaves=2 ** depth,
    )


def build(tree):
    if isinstance(tree, Fraction):
        return Expr.const(tree)
    if isinstance(tree, str):
        return LEAF_EXPR[tree]
    op, a, b = tree
    if op == "^":
        return build(a) ** b
    left, right = build(a), build(b)
    return {"+": left + right, "-": left - right, "*": left * right}[op]


def value(tree, env):
    if isinstance(tree, Fraction):
        return tree
    if isinstance(tree, str):
        return env[tree]
    op, a, b = tree
    if op == "^":
        return value(a, env) ** b
    left, right = value(a, env), value(b, env)
    return {"+": left + right, "-": left - right, "*": left * right}[op]


LEAF_EXPR = {"x0": Expr.atom(X[0]), "x1": Expr.atom(X[1]), "x2": Expr.atom(X[2]),
             "g00": Expr.atom(G[(0, 0)]), "g01": Expr.atom(G[(0, 1)]), "g11": Expr.atom(G[(1, 1)]),
             "s": S, "w": W}
LEAVES = list(LEAF_EXPR)


def metric_env(rng):
    """Consistent, well-conditioned rational point.

    g^ab = L eta L^T with a diagonally dominant L, so sqrt(-g) = 1/|det L| is
    rational and the metric stays away from degeneracy.
    """
    lm = [[Fraction(rng.randint(8, 15), 5), Fraction(rng.randint(-4, 4), 5)],
          [Fraction(rng.randint(-4, 4), 5), Fraction(rng.randint(8, 15), 5)]]
    det_l = lm[0][0] * lm[1][1] - lm[0][1] * lm[1][0]
    eta = (-1, 1)
    up = {(a, b): sum(lm[a][k] * eta[k] * lm[b][k] for k in range(2)) for a in range(2) for b in range(2)}
    det_up = up[(0, 0)] * up[(1, 1)] - up[(0, 1)] ** 2
    env = {"x0": Fraction(rng.randint(-9, 9), 6),
           "x1": Fraction(rng.randint(-9, 9), 6),
           "x2": Fraction(rng.randint(-9, 9), 6),
           "g00": up[(0, 0)], "g01": up[(0, 1)], "g11": up[(1, 1)],
           "w": 1 / det_up, "s": 1 / abs(det_l)}
    assert env["s"] ** 2 == -env["w"]
    return env


def to_point(env):
    return {X[0]: env["x0"], X[1]: env["x1"], X[2]: env["x2"],
            G[(0, 0)]: env["g00"], G[(0, 1)]: env["g01"], G[(1, 1)]: env["g11"],
            METRIC.sqrt_neg_det: env["s"], METRIC.det_lower: env["w"]}


@settings(max_examples=120, deadline=None)
@given(tree_strategy(LEAVES), st.integers(0, 10 ** 6))
def test_normalize_eval_homomorphism(tree, seed):
    rng = random.Random(seed)
    e = build(tree)
    assert normalize(normalize(e)) == normalize(e)
    assert normalize(e - e) == ZERO
    env = metric_env(rng)
    assert evaluate(e, to_point(env)) == value(tree, env)


@settings(max_examples=100, deadline=None)
@given(tree_strategy(LEAVES), tree_strategy(LEAVES))
def test_products_commute(t1, t2):
    assert build(t1) * build(t2) == build(t2) * build(t1)


# --- finite-difference oracle --------------------------------------------------

def float_value(tree, env):
    if isinstance(tree, Fraction):
        return float(tree)
    if isinstance(tree, str):
        if tree == "w":
            return 1.0 / (env["g00"] * env["g11"] - env["g01"] ** 2)
        if tree == "s":
            return math.sqrt(-1.0 / (env["g00"] * env["g11"] - env["g01"] ** 2))
        return env[tree]
    op, a, b = tree
    if op == "^":
        return float_value(a, env) ** b
    left, right = float_value(a, env), float_value(b, env)
    return {"+": left + right, "-": left - right, "*": left * right}[op]


VARS = {"x0": X[0], "x1": X[1], "g00": G[(0, 0)], "g01": G[(0, 1)], "g11": G[(1, 1)]}


@settings(max_examples=110, deadline=None)
@given(tree_strategy(LEAVES, depth=4), st.sampled_from(sorted(VARS)), st.integers(0, 10 ** 6))
def test_partial_matches_central_difference(tree, var, seed):
    rng = random.Random(seed)
    e = build(tree)
    de = partial(e, VARS[var])
    step = 1e-4
    for _ in range(20):
        exact_env = metric_env(rng)
        env = {k: float(v) for k, v in exact_env.items()}
        up, down = dict(env), dict(env)
        up[var] += step
        down[var] -= step
        fd = (float_value(tree, up) - float_value(tree, down)) / (2 * step)
        point = to_point(exact_env)
        point[METRIC.sqrt_neg_det] = exact_env["s"]
        point[METRIC.det_lower] = exact_env["w"]
        exact = float(evaluate(de, point))
        scale = max(1.0, abs(exact), abs(fd))
        assert abs(fd - exact) <= 1e-6 * scale


def test_partial_commutes():
    e = build(("*", ("^", "s", 3), ("+", "g01", ("*", "x0", "g00"))))
    for u in (G[(0, 0)], G[(0, 1)], X[0]):
        for v in (G[(1, 1)], G[(0, 1)]):
            assert partial(partial(e, u), v) == partial(partial(e, v), u)


# --- worked examples -------------------------------------------------------------

def test_commutativity_cancels():
    x, y = Expr.atom(X[0]), Expr.atom(X[1])
    assert x * y - y * x == ZERO


def test_eta_contraction_at_two_dimensions():
    phi = [Expr.atom(Symbol("jet", "phi", (mu,))) for mu in range(2)]
    eta = [[-1, 0], [0, 1]]
    total = ZERO
    for mu in range(2):
        for nu in range(2):
            total = total + phi[mu] * phi[nu] * eta[mu][nu]
    assert total == -phi[0] ** 2 + phi[1] ** 2


def test_sqrt_det_derivative_against_cofactor_formula():
    # Tensor derivative d sqrt(-g)/d g^{01} is half the coordinate derivative
    # because g^{01} = g^{10} is a single coordinate.
    rng = random.Random(7)
    tensor_derivative = partial(S, G[(0, 1)]) * Fraction(1, 2)
    expected = -S * METRIC.lower[(0, 1)] * Fraction(1, 2)
    assert tensor_derivative == expected
    for _ in range(10):
        env = metric_env(rng)
        up = [[env["g00"], env["g01"]], [env["g01"], env["g11"]]]
        det_up = up[0][0] * up[1][1] - up[0][1] ** 2
        lower01 = -up[0][1] / det_up  # brute-force inverse matrix entry
        brute = -Fraction(1, 2) * env["s"] * lower01
        assert evaluate(tensor_derivative, to_point(env)) == brute


def test_partial_examples():
    phi0, phi1 = (Symbol("jet", "phi", (mu,)) for mu in range(2))
    p0 = Symbol("momentum", "phi", (0,))
    m = Symbol("param", "m")
    phi = Symbol("field", "phi")
    lag = (-Expr.atom(phi0) ** 2 + Expr.atom(phi1) ** 2 + Expr.atom(m) ** 2 * Expr.atom(phi) ** 2) * Fraction(-1, 2)
    assert partial(lag, phi0) == Expr.atom(phi0)  # -eta^{0 nu} phi_nu with eta_00 = -1
    energy = Expr.atom(p0) * Expr.atom(phi0) - lag
    assert partial(energy, phi0) == Expr.atom(p0) - partial(lag, phi0)


def test_substitute_examples():
    x, y = Expr.atom(X[0]), Expr.atom(X[1])
    assert substitute(x + y, {X[0]: 0}) == y
    # H(p) with p -> -eta phi gives E_L for Klein-Gordon at m = 2.
    p = [Symbol("momentum", "phi", (mu,)) for mu in range(2)]
    ph = [Symbol("jet", "phi", (mu,)) for mu in range(2)]
    phi, m = Symbol("field", "phi"), Symbol("param", "m")
    eta = (-1, 1)
    ham = sum((Expr.atom(p[mu]) ** 2 * eta[mu] for mu in range(2)), ZERO) * Fraction(-1, 2) \
        + Expr.atom(m) ** 2 * Expr.atom(phi) ** 2 * Fraction(1, 2)
    pulled = substitute(ham, {p[mu]: -Expr.atom(ph[mu]) * eta[mu] for mu in range(2)})
    energy = sum((Expr.atom(ph[mu]) ** 2 * eta[mu] for mu in range(2)), ZERO) * Fraction(-1, 2) \
        + Expr.atom(m) ** 2 * Expr.atom(phi) ** 2 * Fraction(1, 2)
    assert pulled == energy


def test_substitute_chain_rule_numerically():
    rng = random.Random(3)
    x, y = Expr.atom(X[0]), Expr.atom(X[1])
    e = x ** 3 * y + x * y ** 2
    binding = x * y + Expr.atom(X[2]) ** 2
    composed = substitute(e, {X[0]: binding})
    lhs = partial(composed, X[1])
    rhs = substitute(partial(e, X[0]), {X[0]: binding}) * partial(binding, X[1]) \
        + substitute(partial(e, X[1]), {X[0]: binding})
    for _ in range(10):
        pt = {a: Fraction(rng.randint(-9, 9), rng.randint(1, 5)) for a in X}
        assert evaluate(lhs, pt) == evaluate(rhs, pt)


def test_eval_examples_and_errors():
    assert evaluate(ZERO, {}) == 0
    x, y = Expr.atom(X[0]), Expr.atom(X[1])
    assert evaluate(x ** 2 + y, {X[0]: 2, X[1]: 3}) == 7
    with pytest.raises(UnboundSymbol):
        evaluate(x, {})
    t = Symbol("param", "T", laurent=True)
    with pytest.raises(DivisionByZero):
        evaluate(Expr.atom(t) ** -1, {t: 0})


def test_partial_rejects_non_symbols():
    with pytest.raises(UnknownSymbol):
        partial(S, METRIC.sqrt_neg_det)


def test_division_requires_units():
    x = Expr.atom(X[0])
    with pytest.raises(NotInvertible):
        ONE / x
    t = Expr.atom(Symbol("param", "T", laurent=True))
    assert (ONE / t) * t == ONE
    assert (ONE / S) * S == ONE
    assert (ONE / W) * W == ONE


def test_strip_units():
    t = Expr.atom(Symbol("param", "T", laurent=True))
    core = Expr.atom(X[0]) + Expr.atom(G[(0, 1)])
    assert strip_units(core * S * t * -3) == strip_units(core)


def test_function_atoms_chain_rule():
    xi = FuncAtom("xi", (0,), (Expr.atom(X[0]), Expr.atom(X[1])))
    e = Expr.atom(xi) * Expr.atom(X[0])
    d = partial(e, X[0])
    assert d.text() == "xi[0] + x[0]*diff(xi[0], x[0])"
    u = Expr.atom(FuncAtom("phi", (), (Expr.atom(X[0]),)))
    assert partial(exp(-u), X[0]) == -exp(-u) * partial(u, X[0])
    assert exp(-u) * exp(-u).inv() != ZERO


def test_rewrite_depth_bound(monkeypatch):
    monkeypatch.setenv("MULTISYM_MAX_REWRITE", "1")
    with pytest.raises(RewriteDepthExceeded):
        _ = S ** 6 * W


def test_deterministic_text():
    e = (Expr.atom(X[1]) - Expr.atom(X[0]) * 2) ** 2 * S
    assert e.text() == build(("*", ("^", ("-", "x1", ("*", Fraction(2), "x0")), 2), "s")).text()
