"""Field equations i(X)Omega = 0 and the staged constraint algorithm.

The residual 1-form alpha = i(X)Omega has one coefficient per coordinate.
Fiber coefficients are linear in the unknown multivector components and are
solved here.  Base coefficients are quadratic in the unknowns but satisfy
alpha(X_a) = Omega(X_0, ..., X_{m-1}, X_a) = 0 identically, i.e.
alpha_a = -sum_z X_a^z alpha_z, so they vanish once the fiber coefficients do.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .bundle import BundleChart
from .exterior import DiffForm, contract, coordinate_field
from .linalg import ConstraintBasis, InconsistentSystem, Row, SolveResult, make_row, solve_linear
from .multivec import MultiVectorField, contract_multi, unknown_symbol
from .symkernel import ZERO, Expr, NonlinearError, Symbol, strip_units

DEFAULT_MAX_ITER = 10


class ConstraintError(Exception):
    pass


class IterationCapExceeded(ConstraintError):
    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class NonlinearUnknownSystem(ConstraintError):
    pass


class UnsolvedCoefficient(ConstraintError):
    pass


def coordinate_family(z: Symbol) -> str:
    if z.kind == "jet":
        return f"{z.family}[;]"
    if z.kind == "momentum":
        return f"p({z.family})"
    return z.family


@dataclass
class FieldEquationSystem:
    chart: BundleChart
    side: str
    multivector: MultiVectorField
    rows: list  # one Row per nonzero fiber coefficient of i(X)Omega
    deferred: list = field(default_factory=list)  # (label, Expr) nonlinear in the unknowns
    base_directions: int = 0  # base coefficients, implied by the transversality identity
    solution: SolveResult | None = None
    bindings: dict = field(default_factory=dict)  # unknown -> Expr (fixed identifications included)
    assumptions: list = field(default_factory=list)

    @property
    def unknowns(self) -> list:
        return self.multivector.unknowns()

    @property
    def equations(self) -> list:
        return self.solution.equations if self.solution else []

    @property
    def constraints(self) -> list:
        return [r.rhs for r in self.solution.candidates] if self.solution else []

    def residual_count(self) -> int:
        return len(self.rows) + len(self.deferred)


def fiber_residual(X: MultiVectorField, omega: DiffForm, z: Symbol) -> Expr:
    """Coefficient of dz in i(X)omega, i.e. omega(X_0, ..., X_{m-1}, d/dz)."""
    inner = contract(coordinate_field(omega.chart, z), omega)
    value = contract_multi(X, inner)
    scalar = value.terms.get((), ZERO)
    return scalar if X.chart.m % 2 == 0 else -scalar


def derive_field_equations(omega: DiffForm, side: str, bindings: dict | None = None,
                           seed: int = 0) -> FieldEquationSystem:
    """Residuals of i(X)omega = 0 for the general normalized multivector X."""
    chart = omega.chart
    X = MultiVectorField.general(chart)
    bindings = dict(bindings or {})
    if bindings:
        X = X.substitute(bindings)
    unknowns = set(X.unknowns())
    rows: list[Row] = []
    deferred = []
    for z in chart.fiber_coords():
        r = fiber_residual(X, omega, z)
        if r.is_zero():
            continue
        try:
            rows.append(make_row(r, unknowns, f"d{z.name}", coordinate_family(z)))
        except NonlinearError:
            deferred.append((f"d{z.name}", r))
    fes = FieldEquationSystem(chart, side, X, rows, deferred, chart.m)
    fes.solution = solve_linear(rows, seed=seed)
    fes.bindings = dict(bindings)
    fes.bindings.update(fes.solution.bindings)
    fes.assumptions = list(fes.solution.assumptions)
    return fes


def full_residual_form(X: MultiVectorField, omega: DiffForm) -> DiffForm:
    """i(X)omega including the base coefficients (small charts only)."""
    return contract_multi(X, omega)


def sopde_bindings(chart: BundleChart) -> dict:
    """D_a(y) := y_a for every field component (holonomy of the solution)."""
    tower = chart.tower
    return {unknown_symbol(a, y, chart): Expr.atom(tower.jet(y, a))
            for y in chart.fields for a in range(chart.m)}


@dataclass
class ConstraintEntry:
    expr: Expr
    family: str
    label: str
    stage: str


@dataclass
class ConstraintReport:
    side: str
    space: str
    compatibility: list = field(default_factory=list)
    sopde: list = field(default_factory=list)
    tangency: list = field(default_factory=list)  # one list per round
    redundant: list = field(default_factory=list)  # (label, stage) of dependent candidates
    equations: list = field(default_factory=list)
    bindings: dict = field(default_factory=dict)
    status: str = "converged"
    assumptions: list = field(default_factory=list)
    stage_order: str = "compatibility, then SOPDE, then tangency"
    field_equations: FieldEquationSystem | None = None

    @property
    def final(self) -> list:
        entries = self.compatibility + self.sopde + [e for rnd in self.tangency for e in rnd]
        return [e.expr for e in entries]

    def families(self, stage: str) -> dict:
        out: dict = {}
        for entry in getattr(self, stage):
            out.setdefault(entry.family, []).append(entry)
        return out


def _record(basis: ConstraintBasis, candidates, stage: str, report: ConstraintReport) -> list:
    kept = []
    for row in candidates:
        reduced = basis.add(row.rhs)
        if reduced is None:
            report.redundant.append((row.label, stage))
        else:
            kept.append(ConstraintEntry(reduced, row.family, row.label, stage))
    return kept


def _factor_component(a: int, z: Symbol, chart: BundleChart, bindings: dict) -> Expr:
    u = unknown_symbol(a, z, chart)
    return bindings.get(u, Expr.atom(u))


def _tangency_rows(constraints: Sequence[ConstraintEntry], chart: BundleChart, bindings: dict) -> list:
    rows = []
    for entry in constraints:
        c = entry.expr
        deps = [z for z in c.depends_on() if isinstance(z, Symbol) and z in chart.position]
        for a in range(chart.m):
            total = ZERO
            for z in deps:
                dz = c.diff(z)
                if dz.is_zero():
                    continue
                if z.kind == "base":
                    comp = Expr.const(1) if z is chart.base[a] else ZERO
                else:
                    comp = _factor_component(a, z, chart, bindings)
                total = total + dz * comp
            unknowns = {s for s in total.depends_on() if isinstance(s, Symbol) and s.kind == "unknown"}
            rows.append(make_row(total, unknowns, f"X{a}({entry.label})", entry.family))
    return rows


def _merge_bindings(old: dict, new: dict) -> dict:
    merged = {u: v.subs(new) for u, v in old.items()}
    merged.update(new)
    return merged


def run_constraint_algorithm(omega: DiffForm, side: str, max_iter: int = DEFAULT_MAX_ITER,
                             seed: int = 0) -> ConstraintReport:
    if side not in ("lagrangian", "hamiltonian"):
        raise ValueError("side must be 'lagrangian' or 'hamiltonian'")
    chart = omega.chart
    report = ConstraintReport(side, chart.space)
    basis = ConstraintBasis(seed)

    fes = derive_field_equations(omega, side, seed=seed)
    report.field_equations = fes
    report.assumptions.extend(fes.assumptions)
    if fes.deferred:
        report.assumptions.append(f"{len(fes.deferred)} residuals nonlinear in the unknowns were deferred")
    report.compatibility = _record(basis, fes.solution.candidates, "compatibility", report)
    bindings = dict(fes.solution.bindings)
    equations = list(fes.solution.equations)

    if side == "lagrangian":
        holonomy = sopde_bindings(chart)
        rows = []
        for row in fes.rows:
            rows.append(make_row(row.expr().subs(holonomy), set(fes.unknowns) - set(holonomy),
                                 row.label, row.family))
        second = solve_linear(rows, seed=seed)
        report.assumptions.extend(second.assumptions)
        report.sopde = _record(basis, second.candidates, "sopde", report)
        bindings = dict(holonomy)
        bindings.update(second.bindings)
        equations = list(second.equations)

    pending = report.compatibility + report.sopde
    rounds = 0
    while pending:
        if rounds >= max_iter:
            report.status = "iteration cap"
            report.bindings, report.equations = bindings, equations
            raise IterationCapExceeded(f"no fixpoint after {max_iter} tangency rounds", report)
        rounds += 1
        rows = list(equations) + _tangency_rows(pending, chart, bindings)
        result = solve_linear(rows, seed=seed + rounds)
        report.assumptions.extend(result.assumptions)
        bindings = _merge_bindings(bindings, result.bindings)
        equations = list(result.equations)
        new = _record(basis, result.candidates, f"tangency {rounds}", report)
        report.tangency.append(new)
        pending = new
    report.bindings = bindings
    report.equations = equations
    report.assumptions = sorted(set(report.assumptions))
    return report


# ---------------------------------------------------------------------------
# Section form


def derivative_marker(y: Symbol, orders: tuple) -> Symbol:
    """Formal partial derivative of the field or momentum ``y`` along base indices."""
    orders = tuple(sorted(orders))
    label = ",".join(map(str, orders))
    latex = "".join(f"\\partial_{{{k}}}" for k in orders) + y.latex
    return Symbol("marker", "d", (len(orders),) + orders, name=f"d[{label}]({y.name})", latex=latex,
                  extra=y.name)


def section_substitutions(chart: BundleChart, side: str, unknowns: Sequence[Symbol]) -> dict:
    tower = chart.tower
    subs = {}
    if side == "lagrangian":
        for (y, mu), j in tower.jets.items():
            subs[j] = Expr.atom(derivative_marker(y, (mu,)))
    for u in unknowns:
        a, pos = u.index
        z = chart.coords[pos]
        if z.kind in ("field", "momentum", "pscalar"):
            subs[u] = Expr.atom(derivative_marker(z, (a,)))
        elif z.kind == "jet":
            y, mu = tower.jet_info[z]
            subs[u] = Expr.atom(derivative_marker(y, (a, mu)))
        else:
            raise UnsolvedCoefficient(f"no section interpretation for {u.name}")
    return subs


def on_sections(report: ConstraintReport) -> list:
    """PDE form of the final system: bindings, coefficient equations, constraints."""
    fes = report.field_equations
    chart = fes.chart
    unknowns = fes.unknowns
    subs = section_substitutions(chart, report.side, unknowns)
    pieces = []
    for u in sorted(report.bindings, key=lambda s: s.key):
        pieces.append(Expr.atom(u) - report.bindings[u])
    pieces.extend(row.expr() for row in report.equations)
    pieces.extend(report.final)
    out = []
    seen = set()
    for e in pieces:
        value = e.subs(subs)
        leftover = [s for s in value.depends_on() if isinstance(s, Symbol) and s.kind == "unknown"]
        if leftover:
            raise UnsolvedCoefficient(f"unknowns without section meaning: {[s.name for s in leftover]}")
        value = strip_units(value)
        if value.is_zero() or value in seen:
            continue
        seen.add(value)
        out.append(value)
    return out


__all__ = [
    "FieldEquationSystem",
    "ConstraintReport",
    "ConstraintEntry",
    "InconsistentSystem",
    "IterationCapExceeded",
    "NonlinearUnknownSystem",
    "UnsolvedCoefficient",
    "derive_field_equations",
    "run_constraint_algorithm",
    "on_sections",
    "sopde_bindings",
    "full_residual_form",
    "fiber_residual",
    "derivative_marker",
]
