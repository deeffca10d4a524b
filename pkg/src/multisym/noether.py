"""Symmetry verdicts, multimomentum maps and gauge vector fields."""

from __future__ import annotations

from dataclasses import dataclass, field

from .exterior import DiffForm, VectorField, contract, d, lie, volume
from .geometry import kernel_rows
from .lifts import jet_prolong
from .linalg import Row, generic_rank, in_span, make_row, nullspace, solve_linear
from .multivec import contract_multi
from .session import TheorySession
from .symkernel import ZERO, Expr, Symbol


class NoetherError(Exception):
    pass


class NotExactSymmetry(NoetherError):
    def __init__(self, message: str, residual: DiffForm | None = None):
        super().__init__(message)
        self.residual = residual


class VerdictInvariantViolated(NoetherError):
    pass


@dataclass
class SymmetryVerdict:
    generator: str
    space: str
    exact: bool | None
    cartan: bool | None
    natural: bool
    lagrangian_invariant: bool | None
    exact_on_constraints: bool = False
    cartan_on_constraints: bool = False
    residuals: dict = field(default_factory=dict)  # flag name -> DiffForm or Expr
    notes: list = field(default_factory=list)


@dataclass
class MultimomentumMap:
    generator: str
    space: str
    form: DiffForm
    construction: str
    closure_residual: DiffForm  # dJ + i(Y)Omega
    exact: bool
    notes: list = field(default_factory=list)


def _vanishes_on(form: DiffForm, constraints) -> bool:
    if not constraints:
        return False
    return all(in_span(c, constraints) for c in form.terms.values())


def lagrangian_variation(session: TheorySession, xi_e: VectorField) -> Expr:
    """Coefficient of d^m x in L(j^1 xi)(L d^m x)."""
    lag = session.require_lagrangian()
    chart = lag.chart
    density = volume(chart).scale(lag.lagrangian)
    x_lift = jet_prolong(xi_e)
    variation = contract(x_lift, d(density)) + d(contract(x_lift, density))
    return variation.coefficient(chart.base)


def verify_symmetry(session: TheorySession, Y: VectorField, space: str,
                    generator: str | None = None) -> SymmetryVerdict:
    """Exact / Cartan / natural / Lagrangian-invariance flags for Y on ``space``."""
    name = generator or "<vector field>"
    natural = False
    lag_invariant = None
    residuals: dict = {}
    notes: list = []
    if generator is not None:
        xi_e = session.xi_e(generator)
        natural = session.lift(generator, space) == Y
        if session.lagrangian_theory is not None:
            variation = lagrangian_variation(session, xi_e)
            lag_invariant = variation.is_zero()
            if not lag_invariant:
                residuals["lagrangian_invariance"] = variation
    if space == "E":
        notes.append("no multisymplectic form on E; only Lagrangian invariance is evaluated")
        return SymmetryVerdict(name, space, None, None, natural, lag_invariant, residuals=residuals, notes=notes)

    theta, omega = session.forms(space)
    if Y.chart.space != theta.chart.space or set(Y.chart.coords) != set(theta.chart.coords):
        raise NoetherError(f"vector field lives on {Y.chart.space}, forms on {theta.chart.space}")
    constraints = session.final_constraints(space)
    exact_res = lie(Y, theta)
    cartan_res = lie(Y, omega)
    exact = exact_res.is_zero()
    cartan = cartan_res.is_zero()
    exact_on = cartan_on = False
    if not exact:
        residuals["exact"] = exact_res
        if _vanishes_on(exact_res, constraints):
            exact = exact_on = True
            notes.append("L(Y)Theta vanishes on the final constraint submanifold only")
    if not cartan:
        residuals["cartan"] = cartan_res
        if _vanishes_on(cartan_res, constraints):
            cartan = cartan_on = True
            notes.append("L(Y)Omega vanishes on the final constraint submanifold only")
    if exact and not cartan:
        raise VerdictInvariantViolated(f"{name} on {space}: exact but not Cartan")
    return SymmetryVerdict(name, space, exact, cartan, natural, lag_invariant, exact_on, cartan_on,
                           residuals, notes)


def momentum_map(session: TheorySession, Y: VectorField, space: str, generator: str | None = None,
                 require_exact: bool = True) -> MultimomentumMap:
    """J = -i(Y)Theta together with the residual of dJ = -i(Y)Omega."""
    theta, omega = session.forms(space)
    J = -contract(Y, theta)
    closure = d(J) + contract(Y, omega)
    exact = closure.is_zero()
    notes = ["J is determined up to an exact form; the -i(Y)Theta representative is reported"]
    if not exact:
        if _vanishes_on(closure, session.final_constraints(space)):
            exact = True
            notes.append("dJ + i(Y)Omega vanishes on the final constraint submanifold only")
        elif require_exact:
            raise NotExactSymmetry(f"{generator or 'vector field'} is not an exact symmetry on {space}", closure)
        else:
            notes.append("not exact: dJ + i(Y)Omega is nonzero")
    construction = "-i(X)Theta_L" if space == "J1" else "-i(Y)Theta"
    return MultimomentumMap(generator or "<vector field>", space, J, construction, closure, exact, notes)


def conservation_residual(J: DiffForm, field_equations) -> tuple[Expr, bool]:
    """L(X)J for the solved general multivector X, and whether it lies in the span of the open equations.

    For an m-vector X and (m-1)-form J, L(X)J reduces to -(-1)^m i(X)dJ.
    """
    X = field_equations.multivector.substitute(field_equations.bindings)
    dJ = d(J)
    value = contract_multi(X, dJ).terms.get((), ZERO)
    m = J.chart.m
    value = value if m % 2 else -value
    if value.is_zero():
        return value, True
    unknowns = set(X.unknowns())
    equations = list(field_equations.equations)
    probe = make_row(value, unknowns, "L(X)J", "conservation")
    before = solve_linear(equations)
    after = solve_linear(equations + [probe])
    in_span_of_equations = len(after.candidates) == len(before.candidates) and \
        len(after.equations) == len(before.equations) and len(after.bindings) == len(before.bindings)
    return value, in_span_of_equations


@dataclass
class GaugeReport:
    kernel: list  # VectorField basis of the vertical kernel
    tangent: list  # per basis vector: tangent to the final constraints
    notes: list = field(default_factory=list)

    @property
    def gauge_fields(self) -> list:
        return [v for v, ok in zip(self.kernel, self.tangent) if ok]


def find_gauge_fields(session: TheorySession) -> GaugeReport:
    """Vertical kernel of Omega_H on P0 with tangency to the final constraints."""
    ham = session.hamiltonian_theory
    omega = ham.omega
    chart = omega.chart
    directions = list(chart.fiber_coords())
    rows, unknowns = kernel_rows(omega, directions)
    basis, assumptions = nullspace(rows, unknowns, session.seed)
    by_unknown = dict(zip(unknowns, directions))
    kernel = [VectorField(chart, {by_unknown[u]: v for u, v in vec.items()}) for vec in basis]
    constraints = session.final_constraints("P0")
    tangent = [all(in_span(v(c), constraints) for c in constraints) for v in kernel]
    notes = list(assumptions)
    if not all(tangent):
        notes.append("some kernel basis vectors are not individually tangent to the final constraints")
    return GaugeReport(kernel, tangent, notes)


def in_kernel_span(report: GaugeReport, v: VectorField, seed: int = 0) -> bool:
    """Whether v is a combination of the kernel basis (generic rank test)."""
    coords = sorted({c for w in report.kernel + [v] for c in w.components}, key=lambda s: s.key)
    as_rows = [Row(f"k{i}", "kernel", {c: w.component(c) for c in coords if not w.component(c).is_zero()}, ZERO)
               for i, w in enumerate(report.kernel)]
    probe = Row("probe", "kernel", {c: v.component(c) for c in coords if not v.component(c).is_zero()}, ZERO)
    if not coords:
        return True
    return generic_rank(as_rows + [probe], coords, seed) == generic_rank(as_rows, coords, seed)


def coordinate_vector(chart, z: Symbol) -> VectorField:
    return VectorField(chart, {z: Expr.const(1)})


__all__ = [
    "SymmetryVerdict",
    "MultimomentumMap",
    "NotExactSymmetry",
    "NoetherError",
    "VerdictInvariantViolated",
    "verify_symmetry",
    "momentum_map",
    "lagrangian_variation",
    "conservation_residual",
    "find_gauge_fields",
    "GaugeReport",
    "in_kernel_span",
    "coordinate_vector",
]
