"""Reference checks for the bundled example theories.

Each check compares an object derived by the pipeline with a closed form typed
out by hand here, or asserts a structural property (constraint counts, span
equality, exactness).  The hand-typed side never calls the derivation code it
is checking.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources
from itertools import permutations
from typing import Callable, Iterable

from .bundle import FieldFamily, Slot, build_tower
from .constraints import derivative_marker, on_sections
from .dsl import levi_civita, load_theory
from .exterior import (DiffForm, VectorField, contract, d, lie, one_form, pullback, volume, volume_minus,
                       volume_minus2, wedge)
from .geometry import hamiltonize, liouville_forms, pullback_matches
from .lifts import GeneratorSpec, check_legendre_projection, gamma_form, lift_to_E, lift_to_MPi
from .linalg import in_span
from .noether import (conservation_residual, find_gauge_fields, in_kernel_span, momentum_map,
                      verify_symmetry)
from .session import TheorySession
from .symkernel import ZERO, Expr, FuncAtom, Symbol, strip_units

FIXTURES = ("kg", "einstein_cartan", "polyakov")
GROUPS = ("universal",) + FIXTURES
ETA = (-1, 1, 1, 1)


def fixture_text(name: str) -> str:
    return (resources.files("multisym") / "fixtures" / f"{name}.thy").read_text(encoding="utf-8")


@dataclass(frozen=True)
class CheckResult:
    name: str
    group: str
    passed: bool
    detail: str
    seconds: float


@dataclass(frozen=True)
class ReferenceCheck:
    name: str
    group: str
    description: str
    run: Callable


class CheckContext:
    """Lazily loaded sessions, one per fixture; ``sources`` overrides fixture text."""

    def __init__(self, sources: dict | None = None, seed: int = 0):
        self.sources = dict(sources or {})
        self.seed = seed
        self._sessions: dict = {}

    def session(self, name: str) -> TheorySession:
        if name not in self._sessions:
            text = self.sources.get(name) or fixture_text(name)
            self._sessions[name] = TheorySession(load_theory(text), self.seed)
        return self._sessions[name]


CHECKS: list[ReferenceCheck] = []


def _check(name: str, group: str, description: str):
    def register(fn):
        CHECKS.append(ReferenceCheck(name, group, description, fn))
        return fn
    return register


def select_checks(name_filter: str | None = None) -> list[ReferenceCheck]:
    checks = sorted(CHECKS, key=lambda c: c.name)
    if not name_filter:
        return checks
    return [c for c in checks if c.group == name_filter or name_filter in c.name]


def run_checks(name_filter: str | None = None, sources: dict | None = None, seed: int = 0,
               progress: Callable | None = None) -> list[CheckResult]:
    context = CheckContext(sources, seed)
    results = []
    for chk in select_checks(name_filter):
        start = time.perf_counter()
        try:
            passed, detail = chk.run(context)
        except Exception as exc:  # a crashing check is a failing check
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        result = CheckResult(chk.name, chk.group, bool(passed), detail, time.perf_counter() - start)
        results.append(result)
        if progress is not None:
            progress(result)
    return results


# ---------------------------------------------------------------------------
# Comparison helpers


def _short(e) -> str:
    text = e.text() if hasattr(e, "text") else str(e)
    return text if len(text) <= 160 else text[:157] + "..."


def _same_form(actual: DiffForm, expected: DiffForm) -> tuple[bool, str]:
    residual = actual - expected
    if residual.is_zero():
        return True, "equal"
    return False, f"{len(residual.terms)} residual terms, e.g. {_short(next(iter(residual.terms.values())))}"


def _same_field(actual: VectorField, expected: VectorField) -> tuple[bool, str]:
    coords = set(actual.components) | set(expected.components)
    bad = [c for c in coords if actual.component(c) != expected.component(c)]
    if not bad:
        return True, "equal"
    c = sorted(bad, key=lambda s: s.key)[0]
    return False, f"{len(bad)} components differ, e.g. {c.name}: {_short(actual.component(c))} vs " \
                  f"{_short(expected.component(c))}"


def _same_expr(actual: Expr, expected: Expr, label: str) -> tuple[bool, str]:
    if actual == expected:
        return True, f"{label} equal"
    return False, f"{label}: residual {_short(actual - expected)}"


def _same_span(found: list, expected: list, seed: int = 0) -> tuple[bool, str]:
    missing = [e for e in expected if not in_span(e, found, seed)]
    extra = [f for f in found if not in_span(f, expected, seed)]
    if not missing and not extra:
        return True, f"span of {len(found)} derived constraints equals span of {len(expected)} expected"
    return False, f"{len(missing)} expected outside derived span, {len(extra)} derived outside expected span"


def _all(parts: Iterable[tuple[bool, str]]) -> tuple[bool, str]:
    parts = list(parts)
    ok = all(p for p, _ in parts)
    return ok, "; ".join(detail for _, detail in parts)


def _contains_equation(equations: list, expected: Expr) -> bool:
    target = strip_units(expected)
    return any(strip_units(e) == target for e in equations)


# ---------------------------------------------------------------------------
# Hand-typed tensor access


def _param(name: str, index: tuple = (), antisymmetric: bool = False, laurent: bool = False) -> Expr:
    if antisymmetric:
        i, j = index
        if i == j:
            return ZERO
        if i > j:
            return -Expr.atom(Symbol("param", name, (j, i), laurent=laurent))
    return Expr.atom(Symbol("param", name, tuple(index), laurent=laurent))


def _func(name: str, index: tuple, args) -> Expr:
    return Expr.atom(FuncAtom(name, tuple(index), tuple(Expr.atom(a) for a in args)))


def _field(tower, family: str, index: tuple = ()) -> Expr:
    sign, sym = tower.field(family, index)
    return Expr.atom(sym) * sign if sign else ZERO


def _jet(tower, family: str, index: tuple, mu: int) -> Expr:
    sign, sym = tower.field(family, index)
    return Expr.atom(tower.jet(sym, mu)) * sign if sign else ZERO


def _mom(tower, family: str, index: tuple, mu: int) -> Expr:
    sign, sym = tower.field(family, index)
    return Expr.atom(tower.momentum(sym, mu)) * sign if sign else ZERO


def _dfield(chart, tower, family: str, index: tuple, coeff: Expr) -> DiffForm:
    sign, sym = tower.field(family, index)
    if not sign or coeff.is_zero():
        return DiffForm.zero(chart, 1)
    return one_form(chart, sym, coeff * sign)


def _vm(chart, mu: int, coeff: Expr) -> DiffForm:
    return volume_minus(chart, mu).scale(coeff)


def _vm2(chart, mu: int, nu: int) -> DiffForm:
    if mu == nu:
        return DiffForm.zero(chart, chart.m - 2)
    return volume_minus2(chart, mu, nu)


# ---------------------------------------------------------------------------
# Universal identities on the multimomentum bundle


def _toy_tower(m: int, n: int):
    slots = () if n == 1 else (Slot("fib", n, "^"),)
    return build_tower(m, [FieldFamily("y", slots)])


def _opaque_generator(tower) -> GeneratorSpec:
    xs = tower.base
    args = xs + tower.fields
    base = {mu: _func("xi", (mu,), xs) for mu in range(tower.m)}
    fiber = {y: _func("eta", (k,), args) for k, y in enumerate(tower.fields)}
    return GeneratorSpec("opaque", base, fiber)


@_check("universal.liouville_forms", "universal",
        "Theta = p_A^mu dy^A ^ d^{m-1}x_mu + p d^m x and Omega = -dTheta for m in 2..4, n in 1..2")
def _liouville(ctx):
    parts = []
    for m in (2, 3, 4):
        for n in (1, 2):
            tower = _toy_tower(m, n)
            chart = tower.chart("MPI")
            p = Expr.atom(tower.pscalar)
            theta = volume(chart).scale(p)
            omega = -wedge(one_form(chart, tower.pscalar), volume(chart))
            for y in tower.fields:
                for mu in range(m):
                    pm = tower.momentum(y, mu)
                    theta = theta + wedge(one_form(chart, y, Expr.atom(pm)), volume_minus(chart, mu))
                    omega = omega + wedge(wedge(one_form(chart, y), one_form(chart, pm)), volume_minus(chart, mu))
            got_theta, got_omega = liouville_forms(chart)
            ok = got_theta == theta and got_omega == omega and (got_omega + d(got_theta)).is_zero()
            parts.append((ok, f"m={m} n={n}: {'ok' if ok else 'mismatch'}"))
    return _all(parts)


def _lift_cases():
    for m in (2, 3):
        for n in (1, 2):
            tower = _toy_tower(m, n)
            xi_e = lift_to_E(_opaque_generator(tower), tower)
            yield m, n, tower, xi_e, lift_to_MPi(xi_e)


@_check("universal.lift_invariance", "universal",
        "canonical lifts of opaque generators preserve Theta and Omega on MPI (m in 2..3)")
def _lift_invariance(ctx):
    parts = []
    for m, n, tower, _, z in _lift_cases():
        theta, omega = liouville_forms(tower.chart("MPI"))
        ok = lie(z, theta).is_zero() and lie(z, omega).is_zero()
        parts.append((ok, f"m={m} n={n}: {'ok' if ok else 'nonzero Lie derivative'}"))
    return _all(parts)


@_check("universal.gamma_contraction", "universal",
        "Gamma_xi from its closed form equals Theta(Z_xi) (m in 2..3)")
def _gamma_contraction(ctx):
    parts = []
    for m, n, tower, xi_e, z in _lift_cases():
        theta, _ = liouville_forms(tower.chart("MPI"))
        ok, detail = _same_form(gamma_form(xi_e), contract(z, theta))
        parts.append((ok, f"m={m} n={n}: {detail}"))
    return _all(parts)


@_check("universal.hamiltonian_vector_field", "universal",
        "i(Z_xi)Omega = dGamma_xi for opaque generators (m in 2..3)")
def _hamiltonian_vector_field(ctx):
    parts = []
    for m, n, tower, xi_e, z in _lift_cases():
        _, omega = liouville_forms(tower.chart("MPI"))
        ok, detail = _same_form(contract(z, omega), d(gamma_form(xi_e)))
        parts.append((ok, f"m={m} n={n}: {detail}"))
    return _all(parts)


# ---------------------------------------------------------------------------
# Klein-Gordon


def _kg(ctx):
    s = ctx.session("kg")
    tower = s.tower
    phi = tower.fields[0]
    return s, tower, phi


def _kg_lorentz_matrix():
    """Lambda^mu_nu = eta^{mu rho} lam_{rho nu}."""
    return [[_param("lam", (mu, nu), antisymmetric=True) * ETA[mu] for nu in range(4)] for mu in range(4)]


def _kg_mass() -> Expr:
    return _param("m")


def _kg_lorentz_flow(tower) -> list:
    lam = _kg_lorentz_matrix()
    xs = [Expr.atom(x) for x in tower.base]
    return [sum((lam[r][s_] * xs[s_] for s_ in range(4)), ZERO) for r in range(4)]


@_check("kg.hessian", "kg", "multi-Hessian equals -eta^{mu nu}")
def _kg_hessian(ctx):
    s, tower, phi = _kg(ctx)
    lag = s.require_lagrangian()
    bad = []
    for mu in range(4):
        for nu in range(4):
            expected = Expr.const(-ETA[mu]) if mu == nu else ZERO
            got = lag.hessian_entry(tower.jet(phi, mu), tower.jet(phi, nu))
            if got != expected:
                bad.append((mu, nu))
    return (not bad), "all 16 entries equal" if not bad else f"entries differ at {bad}"


@_check("kg.hamiltonian", "kg", "H = -1/2 eta_{mu nu} p^mu p^nu + 1/2 m^2 phi^2 from the Legendre map and as declared")
def _kg_hamiltonian(ctx):
    s, tower, phi = _kg(ctx)
    mass = _kg_mass()
    expected = mass * mass * Expr.atom(phi) ** 2 * Fraction(1, 2)
    for mu in range(4):
        expected = expected - Expr.atom(tower.momentum(phi, mu)) ** 2 * Fraction(ETA[mu], 2)
    derived = hamiltonize(s.require_lagrangian(), None, s.legendre_map).hamiltonian
    return _all([_same_expr(derived, expected, "energy route"),
                 _same_expr(s.hamiltonian_theory.hamiltonian, expected, "declared")])


@_check("kg.hdw_equations", "kg", "section equations d_mu p^mu + m^2 phi = 0 and d_mu phi + eta_{mu nu} p^nu = 0")
def _kg_hdw(ctx):
    s, tower, phi = _kg(ctx)
    equations = on_sections(s.constraint_report("hamiltonian"))
    mass = _kg_mass()
    expected = [mass * mass * Expr.atom(phi)]
    for mu in range(4):
        expected[0] = expected[0] + Expr.atom(derivative_marker(tower.momentum(phi, mu), (mu,)))
    for mu in range(4):
        expected.append(Expr.atom(derivative_marker(phi, (mu,))) + Expr.atom(tower.momentum(phi, mu)) * ETA[mu])
    missing = [e for e in expected if not _contains_equation(equations, e)]
    return (not missing), f"{len(expected)} equations present" if not missing else \
        f"missing {[_short(e) for e in missing]}"


@_check("kg.euler_lagrange", "kg", "section equation -eta^{mu nu} d_mu d_nu phi + m^2 phi = 0")
def _kg_euler_lagrange(ctx):
    s, tower, phi = _kg(ctx)
    equations = on_sections(s.constraint_report("lagrangian"))
    mass = _kg_mass()
    expected = mass * mass * Expr.atom(phi)
    for mu in range(4):
        expected = expected - Expr.atom(derivative_marker(phi, (mu, mu))) * ETA[mu]
    ok = _contains_equation(equations, expected)
    return ok, "Klein-Gordon equation present" if ok else f"not among {[_short(e) for e in equations]}"


@_check("kg.cartan_form_pullback", "kg", "FL^* Theta_H = Theta_L")
def _kg_pullback(ctx):
    s, _, _ = _kg(ctx)
    ok = pullback_matches(s.hamiltonian_theory, s.require_lagrangian())
    return ok, "pullback matches" if ok else "pullback differs"


@_check("kg.lorentz_projection", "kg", "FL_* X_xi = Y_xi for the Lorentz generator")
def _kg_projection(ctx):
    s, _, _ = _kg(ctx)
    report = check_legendre_projection(s.require_lagrangian(), s.hamiltonian_theory, s.xi_e("lorentz"))
    ok = report.related is True and report.invariant
    return ok, f"related={report.related} invariant={report.invariant} differences={len(report.differences)}"


@_check("kg.lorentz_lifts", "kg", "X_xi and Y_xi of the Lorentz generator match their closed forms")
def _kg_lifts(ctx):
    s, tower, phi = _kg(ctx)
    lam = _kg_lorentz_matrix()
    flow = _kg_lorentz_flow(tower)
    x_comps = {x: -flow[mu] for mu, x in enumerate(tower.base)}
    y_comps = dict(x_comps)
    for mu in range(4):
        x_comps[tower.jet(phi, mu)] = sum((lam[nu][mu] * Expr.atom(tower.jet(phi, nu)) for nu in range(4)), ZERO)
        y_comps[tower.momentum(phi, mu)] = -sum((lam[mu][nu] * Expr.atom(tower.momentum(phi, nu))
                                                 for nu in range(4)), ZERO)
    x_ok = _same_field(s.lift("lorentz", "J1"), VectorField(tower.chart("J1"), x_comps))
    y_ok = _same_field(s.lift("lorentz", "J1STAR"), VectorField(tower.chart("J1STAR"), y_comps))
    return _all([(x_ok[0], f"X: {x_ok[1]}"), (y_ok[0], f"Y: {y_ok[1]}")])


def _kg_jl_display(tower, phi, chart) -> DiffForm:
    """Lambda^rho_sigma x^sigma eta^{mu nu}(1/2 phi_mu phi_nu d^3x_rho + phi_nu dphi ^ d^2x_{mu rho})."""
    flow = _kg_lorentz_flow(tower)
    out = DiffForm.zero(chart, 3)
    for rho in range(4):
        for mu in range(4):
            jet = Expr.atom(tower.jet(phi, mu))
            out = out + _vm(chart, rho, flow[rho] * jet * jet * Fraction(ETA[mu], 2))
            out = out + wedge(one_form(chart, phi, flow[rho] * jet * ETA[mu]), _vm2(chart, mu, rho))
    return out


def _kg_jh_display(tower, phi, chart) -> DiffForm:
    """Lambda^rho_sigma x^sigma (p^mu dphi ^ d^2x_{mu rho} + 1/2 eta_{mu nu} p^mu p^nu d^3x_rho)."""
    flow = _kg_lorentz_flow(tower)
    out = DiffForm.zero(chart, 3)
    for rho in range(4):
        for mu in range(4):
            mom = Expr.atom(tower.momentum(phi, mu))
            out = out + wedge(one_form(chart, phi, flow[rho] * mom), _vm2(chart, mu, rho))
            out = out + _vm(chart, rho, flow[rho] * mom * mom * Fraction(ETA[mu], 2))
    return out


def _kg_mass_term(tower, phi, chart) -> DiffForm:
    """-1/2 m^2 phi^2 Lambda^rho_sigma x^sigma d^3x_rho."""
    flow = _kg_lorentz_flow(tower)
    mass = _kg_mass()
    out = DiffForm.zero(chart, 3)
    for rho in range(4):
        out = out + _vm(chart, rho, flow[rho] * mass * mass * Expr.atom(phi) ** 2 * Fraction(-1, 2))
    return out


@_check("kg.momentum_map_lagrangian_display", "kg", "J_L of the Lorentz generator equals the printed closed form")
def _kg_jl_literal(ctx):
    s, tower, phi = _kg(ctx)
    J = momentum_map(s, s.lift("lorentz", "J1"), "J1", "lorentz").form
    return _same_form(J, _kg_jl_display(tower, phi, tower.chart("J1")))


@_check("kg.momentum_map_lagrangian_massless", "kg",
        "J_L of the Lorentz generator equals the printed closed form at m = 0")
def _kg_jl_massless(ctx):
    s, tower, phi = _kg(ctx)
    J = momentum_map(s, s.lift("lorentz", "J1"), "J1", "lorentz").form
    mass = Symbol("param", "m")
    massless = J.map_coefficients(lambda c: c.subs({mass: ZERO}))
    return _same_form(massless, _kg_jl_display(tower, phi, tower.chart("J1")))


@_check("kg.momentum_map_lagrangian_full", "kg",
        "J_L of the Lorentz generator equals the printed form plus its mass term")
def _kg_jl_full(ctx):
    s, tower, phi = _kg(ctx)
    chart = tower.chart("J1")
    J = momentum_map(s, s.lift("lorentz", "J1"), "J1", "lorentz").form
    return _same_form(J, _kg_jl_display(tower, phi, chart) + _kg_mass_term(tower, phi, chart))


@_check("kg.momentum_map_hamiltonian_display", "kg", "J_H of the Lorentz generator equals the printed closed form")
def _kg_jh_literal(ctx):
    s, tower, phi = _kg(ctx)
    J = momentum_map(s, s.lift("lorentz", "J1STAR"), "J1STAR", "lorentz").form
    return _same_form(J, _kg_jh_display(tower, phi, tower.chart("J1STAR")))


@_check("kg.momentum_map_hamiltonian_full", "kg",
        "J_H of the Lorentz generator equals the Legendre image of the full J_L")
def _kg_jh_full(ctx):
    s, tower, phi = _kg(ctx)
    chart = tower.chart("J1STAR")
    flow = _kg_lorentz_flow(tower)
    expected = _kg_mass_term(tower, phi, chart)
    for rho in range(4):
        for mu in range(4):
            mom = Expr.atom(tower.momentum(phi, mu))
            expected = expected - wedge(one_form(chart, phi, flow[rho] * mom), _vm2(chart, mu, rho))
            expected = expected + _vm(chart, rho, flow[rho] * mom * mom * Fraction(ETA[mu], 2))
    J = momentum_map(s, s.lift("lorentz", "J1STAR"), "J1STAR", "lorentz").form
    return _same_form(J, expected)


@_check("kg.momentum_map_legendre", "kg", "FL^* J_H = J_L for the Lorentz generator")
def _kg_j_legendre(ctx):
    s, _, _ = _kg(ctx)
    JL = momentum_map(s, s.lift("lorentz", "J1"), "J1", "lorentz").form
    JH = momentum_map(s, s.lift("lorentz", "J1STAR"), "J1STAR", "lorentz").form
    return _same_form(pullback(s.hamiltonian_theory.legendre_chart_map(), JH), JL)


@_check("kg.conservation", "kg", "L(X_H)J_H vanishes modulo the Hamilton-De Donder-Weyl equations")
def _kg_conservation(ctx):
    s, _, _ = _kg(ctx)
    parts = []
    for name in ("translation", "lorentz"):
        J = momentum_map(s, s.lift(name, "J1STAR"), "J1STAR", name).form
        value, ok = conservation_residual(J, s.constraint_report("hamiltonian").field_equations)
        parts.append((ok, f"{name}: {'in span' if ok else _short(value)}"))
    return _all(parts)


@_check("kg.gauge_kernel", "kg", "no vertical kernel of Omega_H")
def _kg_gauge(ctx):
    report = find_gauge_fields(ctx.session("kg"))
    return (not report.kernel), f"kernel dimension {len(report.kernel)}"


@_check("kg.symmetry_verdicts", "kg", "translation and Lorentz lifts are exact on J1, MPI and J1STAR")
def _kg_verdicts(ctx):
    s, _, _ = _kg(ctx)
    parts = []
    for name in ("translation", "lorentz"):
        for space in ("J1", "MPI", "J1STAR"):
            v = verify_symmetry(s, s.lift(name, space), space, name)
            ok = v.exact and v.cartan and v.natural and v.lagrangian_invariant
            parts.append((ok, f"{name}/{space}: exact={v.exact}"))
    return _all(parts)


# ---------------------------------------------------------------------------
# Einstein-Cartan


def _ec(ctx):
    s = ctx.session("einstein_cartan")
    return s, s.tower


def _eps_pairs():
    """(mu, nu, rho, sig, a, b, c, d, sign) with nonzero eps^{mu nu rho sig} eps_{abcd}."""
    for greek in permutations(range(4)):
        g_sign = levi_civita(greek)
        for frame in permutations(range(4)):
            yield greek + frame + (g_sign * levi_civita(frame),)


def _ec_omega_mixed(tower, c: int, rho: int, i: int) -> Expr:
    """omega^c_{rho i} = omega^{cj}_rho eta_{ji}."""
    return _field(tower, "omega", (c, i, rho)) * ETA[i]


def _ec_quadratic(tower, c: int, d_: int, rho: int, sig: int) -> Expr:
    """omega^c_{rho i} omega^{id}_sig."""
    return sum((_ec_omega_mixed(tower, c, rho, i) * _field(tower, "omega", (i, d_, sig)) for i in range(4)), ZERO)


@_check("einstein_cartan.hessian", "einstein_cartan", "multi-Hessian vanishes identically")
def _ec_hessian(ctx):
    s, _ = _ec(ctx)
    lag = s.require_lagrangian()
    ok = not lag.hessian and lag.hessian_rank == 0
    return ok, f"{len(lag.hessian)} nonzero entries, rank {lag.hessian_rank}"


@_check("einstein_cartan.energy", "einstein_cartan",
        "E_L = -eps^{mu nu rho sig} eps_{abcd} e^a_mu e^b_nu omega^c_{rho i} omega^{id}_sig")
def _ec_energy(ctx):
    s, tower = _ec(ctx)
    expected = ZERO
    for mu, nu, rho, sig, a, b, c, d_, sign in _eps_pairs():
        expected = expected - _field(tower, "e", (a, mu)) * _field(tower, "e", (b, nu)) * \
            _ec_quadratic(tower, c, d_, rho, sig) * sign
    return _same_expr(s.require_lagrangian().energy, expected, "energy")


@_check("einstein_cartan.primary_constraints", "einstein_cartan",
        "p^{mu nu}_a = 0 and pi^{rho sig}_{cd} = eps^{mu nu rho sig} eps_{abcd} e^a_mu e^b_nu")
def _ec_primary(ctx):
    s, tower = _ec(ctx)
    chart = s.chart("P0")
    subs = chart.substitutions
    expected = {}
    for y in tower.fields:
        if y.family == "e":
            for mu in range(4):
                expected[tower.momentum(y, mu)] = ZERO
    sums: dict = {}
    for y in tower.fields:
        if y.family == "omega":
            c, d_, sig = y.index
            for rho in range(4):
                sums[(c, d_, sig, rho)] = ZERO
    for mu, nu, rho, sig, a, b, c, d_, sign in _eps_pairs():
        if c < d_:
            key = (c, d_, sig, rho)
            sums[key] = sums.get(key, ZERO) + _field(tower, "e", (a, mu)) * _field(tower, "e", (b, nu)) * sign
    for (c, d_, sig, rho), value in sums.items():
        _, sym = tower.field("omega", (c, d_, sig))
        expected[tower.momentum(sym, rho)] = value
    bad = [q for q in set(expected) | set(subs) if subs.get(q) != expected.get(q)]
    return (not bad and len(subs) == 160), f"{len(subs)} primary constraints; {len(bad)} mismatches"


def _ec_sopde_expected(tower) -> tuple[list, list]:
    """Tetrad family (free mu, a) and connection family (free sig, c, d) in multivelocities."""
    tetrad: dict = {}
    connection: dict = {}
    for mu, nu, rho, sig, a, b, c, d_, sign in _eps_pairs():
        e_b = _field(tower, "e", (b, nu))
        curvature = _jet(tower, "omega", (c, d_, sig), rho) + _ec_quadratic(tower, c, d_, rho, sig)
        tetrad[(mu, a)] = tetrad.get((mu, a), ZERO) + e_b * curvature * sign
        torsion = _jet(tower, "e", (a, mu), rho) + sum(
            (_field(tower, "e", (i, mu)) * _ec_omega_mixed(tower, a, rho, i) for i in range(4)), ZERO)
        connection[(sig, c, d_)] = connection.get((sig, c, d_), ZERO) + e_b * torsion * sign
    return ([v for v in tetrad.values() if not v.is_zero()],
            [v for k, v in connection.items() if k[1] < k[2] and not v.is_zero()])


@_check("einstein_cartan.lagrangian_constraints", "einstein_cartan",
        "two SOPDE constraint families spanning the printed field equations; no compatibility or tangency constraints")
def _ec_lagrangian_constraints(ctx):
    s, tower = _ec(ctx)
    report = s.constraint_report("lagrangian")
    families = {k: len(v) for k, v in report.families("sopde").items()}
    tetrad, connection = _ec_sopde_expected(tower)
    found = [e.expr for e in report.sopde]
    span_ok, span_detail = _same_span(found, tetrad + connection, ctx.seed)
    counts_ok = not report.compatibility and not any(report.tangency) and len(families) == 2
    return counts_ok and span_ok, f"families {families}, compatibility {len(report.compatibility)}, " \
                                  f"tangency {sum(len(r) for r in report.tangency)}; {span_detail}"


@_check("einstein_cartan.hamiltonian_constraints", "einstein_cartan",
        "no compatibility or tangency constraints on P0")
def _ec_hamiltonian_constraints(ctx):
    s, _ = _ec(ctx)
    report = s.constraint_report("hamiltonian")
    ok = not report.final
    return ok, f"{len(report.compatibility)} compatibility, {sum(len(r) for r in report.tangency)} tangency"


def _ec_xi(tower) -> list:
    return [_func("xi", (mu,), tower.base) for mu in range(4)]


@_check("einstein_cartan.diffeomorphism_lift", "einstein_cartan",
        "Y_xi on P0 equals -xi^mu d_mu + e^a_nu d_mu xi^nu d/de^a_mu + omega^{ab}_nu d_mu xi^nu d/domega^{ab}_mu")
def _ec_diffeo_lift(ctx):
    s, tower = _ec(ctx)
    xi = _ec_xi(tower)
    xs = tower.base
    comps = {x: -xi[mu] for mu, x in enumerate(xs)}
    for y in tower.fields:
        fam, idx = y.family, y.index
        slot_mu = idx[-1]
        total = ZERO
        for nu in range(4):
            total = total + _field(tower, fam, idx[:-1] + (nu,)) * xi[nu].diff(xs[slot_mu])
        comps[y] = total
    return _same_field(s.lift("diffeo", "P0"), VectorField(s.chart("P0"), comps))


def _lorentz_matrices(tower):
    lam = [[_func("Lam", (a, b), tower.base) for b in range(4)] for a in range(4)]
    inv = [[_func("Linv", (a, b), tower.base) for b in range(4)] for a in range(4)]
    return lam, inv


def _ec_lorentz_connection(tower, a: int, b: int, mu: int) -> Expr:
    """Lambda^a_i (Lambda^-1)^{jb} omega^i_{mu j} + Lambda^a_j d_mu (Lambda^-1)^{jb}."""
    lam, inv = _lorentz_matrices(tower)
    total = ZERO
    for i in range(4):
        for j in range(4):
            inv_up = inv[j][b] * ETA[b]
            total = total + lam[a][i] * inv_up * _ec_omega_mixed(tower, i, mu, j)
    for j in range(4):
        total = total + lam[a][j] * (inv[j][b] * ETA[b]).diff(tower.base[mu])
    return total


@_check("einstein_cartan.lorentz_lift", "einstein_cartan",
        "Y_zeta on P0 equals Lambda e d/de + [Lambda Lambda^-1 omega + Lambda d Lambda^-1] d/domega")
def _ec_lorentz_lift(ctx):
    s, tower = _ec(ctx)
    lam, _ = _lorentz_matrices(tower)
    comps = {}
    for y in tower.fields:
        idx = y.index
        if y.family == "e":
            a, mu = idx
            comps[y] = sum((lam[a][b] * _field(tower, "e", (b, mu)) for b in range(4)), ZERO)
        else:
            a, b, mu = idx
            # stored antisymmetric component: skew part of the printed coefficient
            comps[y] = (_ec_lorentz_connection(tower, a, b, mu) - _ec_lorentz_connection(tower, b, a, mu)) \
                * Fraction(1, 2)
    return _same_field(s.lift("lorentz", "P0"), VectorField(s.chart("P0"), comps))


def _ec_diffeo_display(tower, chart) -> DiffForm:
    """eps eps e^a_mu e^b_nu xi^lam (omega^c_{rho i} omega^{id}_sig d^3x_lam - domega^{cd}_sig ^ d^2x_{rho lam})."""
    xi = _ec_xi(tower)
    out = DiffForm.zero(chart, 3)
    for mu, nu, rho, sig, a, b, c, d_, sign in _eps_pairs():
        coeff = _field(tower, "e", (a, mu)) * _field(tower, "e", (b, nu)) * sign
        quad = _ec_quadratic(tower, c, d_, rho, sig)
        for lam in range(4):
            out = out + _vm(chart, lam, coeff * xi[lam] * quad)
            out = out - wedge(_dfield(chart, tower, "omega", (c, d_, sig), coeff * xi[lam]), _vm2(chart, rho, lam))
    return out


def _ec_transport_term(tower, chart) -> DiffForm:
    """-eps eps e^a_mu e^b_nu omega^{cd}_lam d_sig xi^lam d^3x_rho."""
    xi = _ec_xi(tower)
    out = DiffForm.zero(chart, 3)
    for mu, nu, rho, sig, a, b, c, d_, sign in _eps_pairs():
        coeff = _field(tower, "e", (a, mu)) * _field(tower, "e", (b, nu)) * sign
        moved = sum((_field(tower, "omega", (c, d_, lam)) * xi[lam].diff(tower.base[sig]) for lam in range(4)), ZERO)
        out = out - _vm(chart, rho, coeff * moved)
    return out


@_check("einstein_cartan.diffeomorphism_momentum_map_display", "einstein_cartan",
        "J_L(X_xi) and J_H(Y_xi) equal the printed closed form")
def _ec_diffeo_literal(ctx):
    s, tower = _ec(ctx)
    parts = []
    for space in ("J1", "P0"):
        J = momentum_map(s, s.lift("diffeo", space), space, "diffeo").form
        ok, detail = _same_form(J, _ec_diffeo_display(tower, s.chart(space)))
        parts.append((ok, f"{space}: {detail}"))
    return _all(parts)


@_check("einstein_cartan.diffeomorphism_momentum_map_full", "einstein_cartan",
        "J_L(X_xi) and J_H(Y_xi) equal the printed form plus the connection transport term")
def _ec_diffeo_full(ctx):
    s, tower = _ec(ctx)
    parts = []
    for space in ("J1", "P0"):
        chart = s.chart(space)
        J = momentum_map(s, s.lift("diffeo", space), space, "diffeo").form
        ok, detail = _same_form(J, _ec_diffeo_display(tower, chart) + _ec_transport_term(tower, chart))
        parts.append((ok, f"{space}: {detail}"))
    return _all(parts)


@_check("einstein_cartan.lorentz_momentum_map", "einstein_cartan",
        "J_L(X_zeta) = J_H(Y_zeta) = -eps eps e e [Lambda Lambda^-1 omega + Lambda d Lambda^-1] d^3x_rho")
def _ec_lorentz_map(ctx):
    s, tower = _ec(ctx)
    parts = []
    for space in ("J1", "P0"):
        chart = s.chart(space)
        expected = DiffForm.zero(chart, 3)
        for mu, nu, rho, sig, a, b, c, d_, sign in _eps_pairs():
            coeff = _field(tower, "e", (a, mu)) * _field(tower, "e", (b, nu)) * sign
            expected = expected - _vm(chart, rho, coeff * _ec_lorentz_connection(tower, c, d_, sig))
        J = momentum_map(s, s.lift("lorentz", space), space, "lorentz", require_exact=False).form
        ok, detail = _same_form(J, expected)
        parts.append((ok, f"{space}: {detail}"))
    return _all(parts)


@_check("einstein_cartan.symmetry_verdicts", "einstein_cartan",
        "diffeomorphism and infinitesimal local Lorentz lifts are exact on J1, MPI and P0")
def _ec_verdicts(ctx):
    s, _ = _ec(ctx)
    parts = []
    for name in ("diffeo", "lorentz_inf"):
        for space in ("J1", "MPI", "P0"):
            v = verify_symmetry(s, s.lift(name, space), space, name)
            ok = v.exact and v.cartan and v.lagrangian_invariant
            parts.append((ok, f"{name}/{space}: exact={v.exact}"))
    return _all(parts)


# ---------------------------------------------------------------------------
# Polyakov string


def _poly(ctx):
    s = ctx.session("polyakov")
    return s, s.tower, s.theory.metrics[0]


def _poly_T() -> Expr:
    return _param("T", laurent=True)


def _poly_lower(tower, metric) -> list:
    """g_ab as the inverse of the 2x2 matrix g^ab: [[g^11, -g^01], [-g^01, g^00]] det(g_ab)."""
    w = Expr.atom(metric.det_lower)
    g = lambda a, b: _field(tower, "g", (a, b))  # noqa: E731
    return [[g(1, 1) * w, -g(0, 1) * w], [-g(0, 1) * w, g(0, 0) * w]]


def _x_field(tower, mu: int) -> Symbol:
    return tower.field("x", (mu,))[1]


def _xa(tower, mu: int, a: int) -> Expr:
    return _jet(tower, "x", (mu,), a)


def _pa(tower, mu: int, a: int) -> Expr:
    return _mom(tower, "x", (mu,), a)


def _stress_energy(tower, metric, a: int, b: int) -> Expr:
    """T_ab = eta_{mu nu}(x^mu_a x^nu_b - 1/2 g^{cd} g_{ba} x^mu_c x^nu_d)."""
    low = _poly_lower(tower, metric)
    total = ZERO
    for mu in range(4):
        trace = ZERO
        for c in range(2):
            for d_ in range(2):
                trace = trace + _field(tower, "g", (c, d_)) * _xa(tower, mu, c) * _xa(tower, mu, d_)
        total = total + (_xa(tower, mu, a) * _xa(tower, mu, b) - low[b][a] * trace * Fraction(1, 2)) * ETA[mu]
    return total


@_check("polyakov.legendre_map", "polyakov", "p^a_mu = -T sqrt(-g) eta_{mu nu} g^{ab} x^nu_b and pi^c_{ab} = 0")
def _poly_legendre(ctx):
    s, tower, metric = _poly(ctx)
    sq = Expr.atom(metric.sqrt_neg_det)
    momenta = s.legendre_map.momenta
    bad = []
    for y in tower.fields:
        for a in range(2):
            q = tower.momentum(y, a)
            if y.family == "x":
                mu = y.index[0]
                expected = -_poly_T() * sq * ETA[mu] * sum((_field(tower, "g", (a, b)) * _xa(tower, mu, b)
                                                            for b in range(2)), ZERO)
            else:
                expected = ZERO
            if momenta[q] != expected:
                bad.append(q.name)
    return (not bad), "all momenta equal" if not bad else f"differ: {bad}"


@_check("polyakov.hamiltonian", "polyakov", "H_o = -1/(2T sqrt(-g)) eta^{mu nu} g_ab p^a_mu p^b_nu")
def _poly_hamiltonian(ctx):
    s, tower, metric = _poly(ctx)
    low = _poly_lower(tower, metric)
    total = ZERO
    for mu in range(4):
        for a in range(2):
            for b in range(2):
                total = total + low[a][b] * _pa(tower, mu, a) * _pa(tower, mu, b) * ETA[mu]
    expected = -total * (_poly_T() * Expr.atom(metric.sqrt_neg_det)).inv() * Fraction(1, 2)
    return _same_expr(s.hamiltonian_theory.hamiltonian, expected, "H_o")


@_check("polyakov.compatibility_constraint", "polyakov",
        "Lagrangian compatibility constraints span sqrt(-g) eta (x_a x_b - 1/2 g^{cd} g_ba x_c x_d)")
def _poly_compat(ctx):
    s, tower, metric = _poly(ctx)
    report = s.constraint_report("lagrangian")
    sq = Expr.atom(metric.sqrt_neg_det)
    expected = [sq * _stress_energy(tower, metric, a, b) for a, b in ((0, 0), (0, 1), (1, 1))]
    found = [e.expr for e in report.compatibility]
    ok, detail = _same_span(found, expected, ctx.seed)
    families = sorted(report.families("compatibility"))
    return ok and families == ["g"], f"families {families}; {detail}"


@_check("polyakov.stress_energy", "polyakov", "dL/dg^{ab} = -(T/2) sqrt(-g) T_ab with the tensor derivative")
def _poly_stress(ctx):
    s, tower, metric = _poly(ctx)
    lag = s.require_lagrangian().lagrangian
    sq = Expr.atom(metric.sqrt_neg_det)
    parts = []
    for y in tower.fields:
        if y.family != "g":
            continue
        a, b = y.index
        tensor_derivative = lag.diff(y) * Fraction(1, tower.weight(y))
        expected = -_poly_T() * sq * _stress_energy(tower, metric, a, b) * Fraction(1, 2)
        parts.append(_same_expr(tensor_derivative, expected, f"g[{a},{b}]"))
    return _all(parts)


@_check("polyakov.trace_identity", "polyakov", "g^{ab} T_ab = 0 identically on J1")
def _poly_trace(ctx):
    s, tower, metric = _poly(ctx)
    total = ZERO
    for a in range(2):
        for b in range(2):
            total = total + _field(tower, "g", (a, b)) * _stress_energy(tower, metric, a, b)
    return total.is_zero(), "traceless" if total.is_zero() else f"trace {_short(total)}"


@_check("polyakov.tangency", "polyakov", "no SOPDE or tangency constraints on either side")
def _poly_tangency(ctx):
    s, _, _ = _poly(ctx)
    lag = s.constraint_report("lagrangian")
    ham = s.constraint_report("hamiltonian")
    counts = (len(lag.sopde), sum(len(r) for r in lag.tangency), sum(len(r) for r in ham.tangency))
    return counts == (0, 0, 0), f"sopde {counts[0]}, Lagrangian tangency {counts[1]}, Hamiltonian tangency {counts[2]}"


@_check("polyakov.hamiltonian_compatibility", "polyakov",
        "Hamiltonian compatibility constraints span eta^{mu nu}(p^a_mu p^b_nu - 1/2 g_cd g^ba p^d_mu p^c_nu)/(2T sqrt(-g))")
def _poly_ham_compat(ctx):
    s, tower, metric = _poly(ctx)
    low = _poly_lower(tower, metric)
    scale = (_poly_T() * Expr.atom(metric.sqrt_neg_det)).inv() * Fraction(1, 2)
    expected = []
    for a, b in ((0, 0), (0, 1), (1, 1)):
        total = ZERO
        for mu in range(4):
            trace = ZERO
            for c in range(2):
                for d_ in range(2):
                    trace = trace + low[c][d_] * _pa(tower, mu, d_) * _pa(tower, mu, c)
            total = total + (_pa(tower, mu, a) * _pa(tower, mu, b)
                             - _field(tower, "g", (b, a)) * trace * Fraction(1, 2)) * ETA[mu]
        expected.append(total * scale)
    found = [e.expr for e in s.constraint_report("hamiltonian").compatibility]
    return _same_span(found, expected, ctx.seed)


@_check("polyakov.symmetry_verdicts", "polyakov", "diffeomorphism, Poincare and Weyl lifts are exact on J1, MPI and P0")
def _poly_verdicts(ctx):
    s, _, _ = _poly(ctx)
    parts = []
    for name in ("diffeo", "poincare", "weyl"):
        for space in ("J1", "MPI", "P0"):
            v = verify_symmetry(s, s.lift(name, space), space, name)
            ok = v.exact and v.cartan and v.lagrangian_invariant
            parts.append((ok, f"{name}/{space}: exact={v.exact}"))
    return _all(parts)


@_check("polyakov.legendre_projection", "polyakov", "(FL_o)_* X = Y_o for all three symmetry families")
def _poly_projection(ctx):
    s, _, _ = _poly(ctx)
    parts = []
    for name in ("diffeo", "poincare", "weyl"):
        report = check_legendre_projection(s.require_lagrangian(), s.hamiltonian_theory, s.xi_e(name),
                                           s.final_constraints("P0"))
        parts.append((report.related is True, f"{name}: related={report.related}"))
    return _all(parts)


@_check("polyakov.weyl_momentum_map", "polyakov", "Weyl momentum maps vanish on J1 and P0")
def _poly_weyl_map(ctx):
    s, _, _ = _poly(ctx)
    parts = []
    for space in ("J1", "P0"):
        J = momentum_map(s, s.lift("weyl", space), space, "weyl").form
        parts.append((J.is_zero(), f"{space}: {'zero' if J.is_zero() else _short(J)}"))
    return _all(parts)


@_check("polyakov.weyl_lift", "polyakov", "Y_phi on P0 equals exp(-phi) g^{ab} d/dg^{ab}")
def _poly_weyl_lift(ctx):
    s, tower, _ = _poly(ctx)
    factor = Expr.atom(FuncAtom("exp", (), (-_func("phi", (), tower.base),)))
    comps = {y: factor * Expr.atom(y) for y in tower.fields if y.family == "g"}
    return _same_field(s.lift("weyl", "P0"), VectorField(s.chart("P0"), comps))


def _poincare_flow(tower) -> list:
    """omega^mu_nu x^nu + a^mu with omega^mu_nu = eta^{mu rho} om_{rho nu}."""
    out = []
    for mu in range(4):
        total = _param("t", (mu,))
        for nu in range(4):
            total = total + _param("om", (mu, nu), antisymmetric=True) * ETA[mu] * Expr.atom(_x_field(tower, nu))
        out.append(total)
    return out


def _omega_trailing(mu: int, nu: int) -> Expr:
    """omega_nu^mu = eta^{mu rho} om_{nu rho}, the index order used in the printed lifts."""
    return _param("om", (nu, mu), antisymmetric=True) * ETA[mu]


@_check("polyakov.poincare_lifts", "polyakov",
        "X_zeta = (omega x + a) d/dx - x^nu_a omega_nu^mu d/dx^mu_a and Y_zeta = (omega x + a) d/dx + p^a_nu omega_mu^nu d/dp^a_mu")
def _poly_poincare_lifts(ctx):
    s, tower, _ = _poly(ctx)
    flow = _poincare_flow(tower)
    x_comps = {_x_field(tower, mu): flow[mu] for mu in range(4)}
    y_comps = dict(x_comps)
    for mu in range(4):
        x_sym = _x_field(tower, mu)
        for a in range(2):
            x_comps[tower.jet(x_sym, a)] = -sum((_xa(tower, nu, a) * _omega_trailing(mu, nu) for nu in range(4)), ZERO)
            y_comps[tower.momentum(x_sym, a)] = sum((_pa(tower, nu, a) * _omega_trailing(nu, mu) for nu in range(4)),
                                                   ZERO)
    x_ok = _same_field(s.lift("poincare", "J1"), VectorField(tower.chart("J1"), x_comps))
    y_ok = _same_field(s.lift("poincare", "P0"), VectorField(s.chart("P0"), y_comps))
    return _all([(x_ok[0], f"X: {x_ok[1]}"), (y_ok[0], f"Y: {y_ok[1]}")])


@_check("polyakov.poincare_momentum_maps", "polyakov",
        "J_L = T sqrt(-g) eta g^{ab} x_b (omega x + a) d^1 sigma_a and J_H = -p^a_mu (omega x + a) d^1 sigma_a")
def _poly_poincare_maps(ctx):
    s, tower, metric = _poly(ctx)
    flow = _poincare_flow(tower)
    sq = Expr.atom(metric.sqrt_neg_det)
    j1, p0 = tower.chart("J1"), s.chart("P0")
    expected_l = DiffForm.zero(j1, 1)
    expected_h = DiffForm.zero(p0, 1)
    for a in range(2):
        for mu in range(4):
            gx = sum((_field(tower, "g", (a, b)) * _xa(tower, mu, b) for b in range(2)), ZERO)
            expected_l = expected_l + _vm(j1, a, _poly_T() * sq * ETA[mu] * gx * flow[mu])
            expected_h = expected_h - _vm(p0, a, _pa(tower, mu, a) * flow[mu])
    jl = momentum_map(s, s.lift("poincare", "J1"), "J1", "poincare").form
    jh = momentum_map(s, s.lift("poincare", "P0"), "P0", "poincare").form
    left, right = _same_form(jl, expected_l), _same_form(jh, expected_h)
    return _all([(left[0], f"J_L: {left[1]}"), (right[0], f"J_H: {right[1]}")])


def _poly_xi(tower) -> list:
    return [_func("xi", (a,), tower.base) for a in range(2)]


@_check("polyakov.diffeomorphism_lift", "polyakov",
        "Y_xi on P0 = -xi^a d_a - (g^{ac} d_c xi^b + g^{cb} d_c xi^a) d/dg^{ab} + (p^a_mu d_b xi^b - p^b_mu d_b xi^a) d/dp^a_mu")
def _poly_diffeo_lift(ctx):
    s, tower, _ = _poly(ctx)
    xi = _poly_xi(tower)
    sig = tower.base
    comps = {sig[a]: -xi[a] for a in range(2)}
    for y in tower.fields:
        if y.family == "g":
            a, b = y.index
            comps[y] = -sum((_field(tower, "g", (a, c)) * xi[b].diff(sig[c])
                             + _field(tower, "g", (c, b)) * xi[a].diff(sig[c]) for c in range(2)), ZERO)
    div = xi[0].diff(sig[0]) + xi[1].diff(sig[1])
    for mu in range(4):
        for a in range(2):
            q = tower.momentum(_x_field(tower, mu), a)
            comps[q] = _pa(tower, mu, a) * div - sum((_pa(tower, mu, b) * xi[a].diff(sig[b]) for b in range(2)), ZERO)
    return _same_field(s.lift("diffeo", "P0"), VectorField(s.chart("P0"), comps))


def _epsilon2(a: int, b: int) -> int:
    """eps_ab with eps^{01} = 1 lowered in signature (-, +), so eps_01 = -1."""
    return -levi_civita((a, b))


@_check("polyakov.diffeomorphism_momentum_map_lagrangian", "polyakov",
        "J_L(X_xi) = T sqrt(-g) xi^c eta g^{ab} x^nu_b (1/2 x^mu_a d^1 sigma_c - eps_ac dx^mu)")
def _poly_diffeo_jl(ctx):
    s, tower, metric = _poly(ctx)
    xi = _poly_xi(tower)
    sq = Expr.atom(metric.sqrt_neg_det)
    chart = tower.chart("J1")
    expected = DiffForm.zero(chart, 1)
    for mu in range(4):
        for a in range(2):
            gx = sum((_field(tower, "g", (a, b)) * _xa(tower, mu, b) for b in range(2)), ZERO)
            pre = _poly_T() * sq * ETA[mu] * gx
            for c in range(2):
                expected = expected + _vm(chart, c, pre * xi[c] * _xa(tower, mu, a) * Fraction(1, 2))
                if _epsilon2(a, c):
                    expected = expected - one_form(chart, _x_field(tower, mu), pre * xi[c] * _epsilon2(a, c))
    J = momentum_map(s, s.lift("diffeo", "J1"), "J1", "diffeo").form
    return _same_form(J, expected)


def _poly_diffeo_jh_display(s, tower, metric) -> DiffForm:
    """-eps_ab xi^b p^a_mu dx^mu - 1/(2T sqrt(-g)) eta g_ab p^a p^b xi^c d^1 sigma_c."""
    xi = _poly_xi(tower)
    low = _poly_lower(tower, metric)
    chart = s.chart("P0")
    quad = ZERO
    for mu in range(4):
        for a in range(2):
            for b in range(2):
                quad = quad + low[a][b] * _pa(tower, mu, a) * _pa(tower, mu, b) * ETA[mu]
    scale = (_poly_T() * Expr.atom(metric.sqrt_neg_det)).inv() * Fraction(1, 2)
    expected = DiffForm.zero(chart, 1)
    for mu in range(4):
        for a in range(2):
            for b in range(2):
                if _epsilon2(a, b):
                    expected = expected - one_form(chart, _x_field(tower, mu),
                                                   xi[b] * _pa(tower, mu, a) * _epsilon2(a, b))
    for c in range(2):
        expected = expected - _vm(chart, c, scale * quad * xi[c])
    return expected


@_check("polyakov.diffeomorphism_momentum_map_hamiltonian", "polyakov",
        "J_H(Y_xi) = -eps_ab xi^b p^a_mu dx^mu - 1/(2T sqrt(-g)) eta g_ab p^a p^b xi^c d^1 sigma_c")
def _poly_diffeo_jh(ctx):
    s, tower, metric = _poly(ctx)
    J = momentum_map(s, s.lift("diffeo", "P0"), "P0", "diffeo").form
    return _same_form(J, _poly_diffeo_jh_display(s, tower, metric))


@_check("polyakov.diffeomorphism_momentum_map_hamiltonian_negated", "polyakov",
        "J_H(Y_xi) equals the printed closed form with the overall sign reversed")
def _poly_diffeo_jh_negated(ctx):
    s, tower, metric = _poly(ctx)
    J = momentum_map(s, s.lift("diffeo", "P0"), "P0", "diffeo").form
    return _same_form(J, -_poly_diffeo_jh_display(s, tower, metric))


@_check("polyakov.momentum_map_legendre", "polyakov", "FL_o^* J_H = J_L for all three symmetry families")
def _poly_j_legendre(ctx):
    s, _, _ = _poly(ctx)
    fl = s.hamiltonian_theory.legendre_chart_map()
    parts = []
    for name in ("diffeo", "poincare", "weyl"):
        jl = momentum_map(s, s.lift(name, "J1"), "J1", name).form
        jh = momentum_map(s, s.lift(name, "P0"), "P0", name).form
        ok, detail = _same_form(pullback(fl, jh), jl)
        parts.append((ok, f"{name}: {detail}"))
    return _all(parts)


@_check("polyakov.gauge_kernel", "polyakov", "the Weyl direction lies in the vertical kernel of Omega_H on P0")
def _poly_gauge(ctx):
    s, tower, _ = _poly(ctx)
    report = find_gauge_fields(s)
    weyl = VectorField(s.chart("P0"), {y: Expr.atom(y) for y in tower.fields if y.family == "g"})
    ok = bool(report.kernel) and in_kernel_span(report, weyl, ctx.seed)
    return ok, f"kernel dimension {len(report.kernel)}; Weyl direction {'in' if ok else 'not in'} span"


__all__ = [
    "CHECKS",
    "GROUPS",
    "FIXTURES",
    "CheckContext",
    "CheckResult",
    "ReferenceCheck",
    "fixture_text",
    "run_checks",
    "select_checks",
]
