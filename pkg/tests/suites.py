"""Seeded property suites with exact case counts, shared by module tests and the acceptance run."""

from __future__ import annotations

import random
from fractions import Fraction

from multisym.bundle import ChartMap, FieldFamily, Slot, build_tower
from multisym.exterior import DiffForm, VectorField, d, lie, pullback, wedge
from multisym.lifts import GeneratorSpec, jet_prolong, lift_to_E, lift_to_J1PiStar, lift_to_MPi
from multisym.geometry import LagrangianTheory, liouville_forms
from multisym.noether import verify_symmetry
from multisym.symkernel import ZERO, Expr, evaluate, normalize, partial

from test_symkernel import LEAVES, VARS, build, float_value, metric_env, to_point, value


# --- random data ------------------------------------------------------------------------


def random_tree(rng: random.Random, leaves, depth: int):
    if depth == 0 or rng.random() < 0.25:
        if rng.random() < 0.3:
            return Fraction(rng.randint(-5, 5), rng.randint(1, 4))
        return rng.choice(leaves)
    op = rng.choice("+-*^")
    if op == "^":
        return ("^", random_tree(rng, leaves, depth - 1), rng.randint(0, 3))
    return (op, random_tree(rng, leaves, depth - 1), random_tree(rng, leaves, depth - 1))


def random_poly(rng: random.Random, coords, terms: int = 3, max_degree: int = 2) -> Expr:
    total = ZERO
    for _ in range(terms):
        mono = Expr.const(rng.randint(-3, 3))
        for _ in range(rng.randint(0, max_degree)):
            mono = mono * Expr.atom(rng.choice(coords))
        total = total + mono
    return total


def random_form(rng: random.Random, chart, degree: int, terms: int = 3) -> DiffForm:
    coords = list(chart.coords)
    out = DiffForm.zero(chart, degree)
    for _ in range(terms):
        picked = rng.sample(coords, degree)
        out = out + DiffForm.basis(chart, picked, random_poly(rng, coords))
    return out


def small_tower(rng: random.Random):
    m = rng.choice((2, 3))
    n = rng.choice((1, 2))
    slots = () if n == 1 else (Slot("fib", n, "^"),)
    return build_tower(m, [FieldFamily("y", slots)])


def random_chart_map(rng: random.Random, chart) -> ChartMap:
    coords = list(chart.coords)
    images = {c: Expr.atom(c) + random_poly(rng, coords, terms=2) for c in coords}
    return ChartMap(chart, chart, images)


def polynomial_generator(rng: random.Random, tower, name: str = "g") -> GeneratorSpec:
    xs = list(tower.base)
    base = {mu: random_poly(rng, xs, terms=2) for mu in range(tower.m)}
    fiber = {y: random_poly(rng, xs + list(tower.fields), terms=2) for y in tower.fields}
    return GeneratorSpec(name, base, fiber)


# --- suites ------------------------------------------------------------------------------


def check_d_squared(n: int, seed: int = 1) -> int:
    rng = random.Random(seed)
    for case in range(n):
        tower = small_tower(rng)
        chart = tower.chart(rng.choice(("E", "J1", "MPI")))
        form = random_form(rng, chart, rng.randint(0, 3))
        assert d(d(form)).is_zero(), f"case {case}: d(d(a)) != 0"
    return n


def check_pullback(n: int, seed: int = 2) -> int:
    rng = random.Random(seed)
    for case in range(n):
        tower = small_tower(rng)
        chart = tower.chart("E")
        phi = random_chart_map(rng, chart)
        a = random_form(rng, chart, rng.randint(0, 2))
        b = random_form(rng, chart, rng.randint(0, 1))
        f = random_poly(rng, list(chart.coords))
        assert pullback(phi, wedge(a, b)) == wedge(pullback(phi, a), pullback(phi, b)), f"case {case}: wedge"
        assert pullback(phi, a + a.scale(f)) == pullback(phi, a) + pullback(phi, a).scale(phi.pull(f)), \
            f"case {case}: linearity"
        assert pullback(phi, d(a)) == d(pullback(phi, a)), f"case {case}: d"
    return n


def check_finite_difference(n: int, seed: int = 3) -> int:
    rng = random.Random(seed)
    names = sorted(VARS)
    step = 1e-4
    for case in range(n):
        tree = random_tree(rng, LEAVES, 4)
        var = rng.choice(names)
        de = partial(build(tree), VARS[var])
        exact_env = metric_env(rng)
        env = {k: float(v) for k, v in exact_env.items()}
        up, down = dict(env), dict(env)
        up[var] += step
        down[var] -= step
        fd = (float_value(tree, up) - float_value(tree, down)) / (2 * step)
        exact = float(evaluate(de, to_point(exact_env)))
        scale = max(1.0, abs(exact), abs(fd))
        assert abs(fd - exact) <= 1e-6 * scale, f"case {case}: d/d{var} exact {exact} vs difference {fd}"
    return n


def check_normalize_eval(n: int, seed: int = 4) -> int:
    rng = random.Random(seed)
    for case in range(n):
        tree = random_tree(rng, LEAVES, 5)
        e = build(tree)
        assert normalize(normalize(e)) == normalize(e), f"case {case}: normalize not idempotent"
        env = metric_env(rng)
        assert evaluate(e, to_point(env)) == value(tree, env), f"case {case}: evaluation mismatch"
    return n


def _scaled(spec: GeneratorSpec, k) -> dict:
    return {"base": {mu: v * k for mu, v in spec.base.items()},
            "fiber": {y: v * k for y, v in spec.fiber.items()}}


def check_lift_linearity(n: int, seed: int = 5) -> int:
    rng = random.Random(seed)
    for case in range(n):
        tower = small_tower(rng)
        g1 = polynomial_generator(rng, tower, "a")
        g2 = polynomial_generator(rng, tower, "b")
        a, b = rng.randint(-3, 3), rng.randint(-3, 3)
        s1, s2 = _scaled(g1, a), _scaled(g2, b)
        base = {mu: s1["base"].get(mu, ZERO) + s2["base"].get(mu, ZERO) for mu in range(tower.m)}
        fiber = {y: s1["fiber"].get(y, ZERO) + s2["fiber"].get(y, ZERO) for y in tower.fields}
        combined = lift_to_E(GeneratorSpec("ab", base, fiber), tower)
        e1, e2 = lift_to_E(g1, tower), lift_to_E(g2, tower)
        assert combined == e1.scale(a) + e2.scale(b), f"case {case}: E"
        for lift in (jet_prolong, lift_to_MPi, lift_to_J1PiStar):
            assert lift(combined) == lift(e1).scale(a) + lift(e2).scale(b), f"case {case}: {lift.__name__}"
    return n


class _StubSession:
    """Just enough session surface for verify_symmetry on a random Lagrangian."""

    def __init__(self, tower, lagrangian):
        self.tower = tower
        self.lagrangian_theory = LagrangianTheory(tower, lagrangian)

    def forms(self, space):
        if space == "J1":
            return self.lagrangian_theory.theta, self.lagrangian_theory.omega
        return liouville_forms(self.tower.chart("MPI"))

    def final_constraints(self, space):
        return []


def check_exact_implies_cartan(n: int, seed: int = 6) -> tuple[int, int]:
    """Verdicts on random fields; returns (cases, exact verdicts seen)."""
    rng = random.Random(seed)
    exact_seen = 0
    for case in range(n):
        tower = small_tower(rng)
        chart = tower.chart("J1")
        lag = random_poly(rng, list(tower.fields) + list(chart.jets), terms=3)
        session = _StubSession(tower, lag)
        space = rng.choice(("J1", "MPI"))
        target = tower.chart(space)
        if rng.random() < 0.5:
            xi_e = lift_to_E(polynomial_generator(rng, tower), tower)
            Y = jet_prolong(xi_e) if space == "J1" else lift_to_MPi(xi_e)
        else:
            Y = VectorField(target, {c: random_poly(rng, list(target.coords), terms=2)
                                     for c in rng.sample(list(target.coords), 2)})
        verdict = verify_symmetry(session, Y, space)
        if verdict.exact:
            exact_seen += 1
            assert verdict.cartan, f"case {case}: exact but not Cartan"
        theta, omega = session.forms(space)
        assert (lie(Y, theta).is_zero()) <= (lie(Y, omega).is_zero()), f"case {case}: raw exact => Cartan"
    return n, exact_seen


# --- parser fuzzing ----------------------------------------------------------------------

FUZZ_TOKENS = ["theory", "T", "{", "}", "base", "x", "[", "]", "2", "4", ";", "field", "phi", "param", "m",
               "const", "eta", "=", "diag", "(", ")", ",", "-", "+", "*", "/", "^", "sum", "mu", "nu",
               "index", ":", "lagrangian", "hamiltonian", "p", "symmetry", "component", "transport",
               "range", "levicivita", "derived", "invmetric", "function", "assume", "nonzero", "option",
               "diff", "exp", "_base", "^base", "antisymmetric", "symmetric", "#thy 1\n", "\n", "0", "99"]


def fuzz_inputs(n: int, seed: int, fixtures):
    """Token soup, raw bytes and mutated fixtures, in fixed proportions."""
    rng = random.Random(seed)
    for case in range(n):
        kind = case % 4
        if kind == 0:
            yield " ".join(rng.choice(FUZZ_TOKENS) for _ in range(rng.randint(0, 40)))
        elif kind == 1:
            yield bytes(rng.randrange(256) for _ in range(rng.randint(0, 60)))
        else:
            text = list(rng.choice(fixtures))
            for _ in range(rng.randint(1, 4)):
                pos = rng.randrange(len(text) + 1)
                action = rng.random()
                if action < 0.4 and pos < len(text):
                    del text[pos]
                elif action < 0.8:
                    text.insert(pos, rng.choice("{}[]();,=+-*/^#_ \n0123456789abcpxyz"))
                elif pos < len(text):
                    text[pos] = rng.choice(FUZZ_TOKENS)
            yield "".join(text)


def run_fuzz(n: int, seed: int, fixtures, resolve_limit: int = 1100) -> dict:
    """Parse every input and resolve the parsable ones up to ``resolve_limit`` characters.

    Only DslError may escape the front end.  The limit skips resolving the
    large Einstein-Cartan mutants, whose Lagrangian expansion dominates runtime.
    """
    from multisym.dsl import DslError, parse, resolve

    stats = {"inputs": 0, "parsed": 0, "resolved": 0}
    for text in fuzz_inputs(n, seed, fixtures):
        stats["inputs"] += 1
        try:
            spec = parse(text)
        except DslError:
            continue
        stats["parsed"] += 1
        if len(text) > resolve_limit:
            continue
        try:
            resolve(spec, text if isinstance(text, str) else "")
        except DslError:
            continue
        stats["resolved"] += 1
    return stats
