"""Theory-specific forms: Liouville, Poincare-Cartan, Legendre maps, Hamilton-Cartan.

Coordinates follow the stored (independent) field components.  For a stored
component y of tensor weight w (the number of tensor slots it represents),
the conjugate momentum is p = (1/w) dL/dy_mu so that the canonical form reads
sum_y w_y p_y^mu dy ^ d^{m-1}x_mu.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

from .bundle import BundleChart, ChartMap, Tower, embedding, restrict
from .exterior import DiffForm, contract, coordinate_field, d, one_form, pullback, volume, volume_minus, wedge
from .linalg import Row, generic_rank, make_row, nullspace, solve_linear
from .symkernel import ZERO, Expr, NonlinearError, Symbol, as_expr, partial


class GeometryError(Exception):
    pass


class WrongSpace(GeometryError):
    pass


class NonlinearInversion(GeometryError):
    pass


class NoHamiltonianFound(GeometryError):
    def __init__(self, message: str, residual: Expr | None = None):
        super().__init__(message)
        self.residual = residual


def canonical_theta(chart: BundleChart) -> DiffForm:
    """sum_y w_y p_y^mu dy ^ d^{m-1}x_mu on a multimomentum chart."""
    tower = chart.tower
    theta = DiffForm.zero(chart, chart.m)
    for y in chart.fields:
        w = tower.weight(y)
        for mu in range(chart.m):
            p = tower.momentum(y, mu)
            if p not in chart.position:
                continue
            theta = theta + wedge(one_form(chart, y, Expr.atom(p) * w), volume_minus(chart, mu))
    return theta


def liouville_forms(chart: BundleChart) -> tuple[DiffForm, DiffForm]:
    """Tautological m-form and (m+1)-form of the extended multimomentum bundle."""
    if chart.space != "MPI":
        raise WrongSpace(f"Liouville forms live on MPI, not {chart.space}")
    theta = canonical_theta(chart) + volume(chart).scale(Expr.atom(chart.pscalar))
    return theta, -d(theta)


# ---------------------------------------------------------------------------
# Lagrangian side


class LagrangianTheory:
    def __init__(self, tower: Tower, lagrangian, assumptions=(), name: str = ""):
        self.tower = tower
        self.chart = tower.chart("J1")
        self.lagrangian = as_expr(lagrangian)
        stray = [a.name for a in self.lagrangian.depends_on()
                 if isinstance(a, Symbol) and a.kind in ("momentum", "pscalar")]
        if stray:
            raise WrongSpace(f"Lagrangian uses multimomentum coordinates {stray}")
        self.assumptions = list(assumptions)
        self.name = name

    @cached_property
    def jet_derivatives(self) -> dict:
        return {j: partial(self.lagrangian, j) for j in self.chart.jets}

    @cached_property
    def energy(self) -> Expr:
        total = -self.lagrangian
        for j, dl in self.jet_derivatives.items():
            total = total + Expr.atom(j) * dl
        return total

    @cached_property
    def theta(self) -> DiffForm:
        chart = self.chart
        out = volume(chart).scale(-self.energy)
        for (y, mu), j in self.tower.jets.items():
            dl = self.jet_derivatives[j]
            if not dl.is_zero():
                out = out + wedge(one_form(chart, y, dl), volume_minus(chart, mu))
        return out

    @cached_property
    def omega(self) -> DiffForm:
        return -d(self.theta)

    @cached_property
    def hessian(self) -> dict:
        """Second derivatives (j_i, j_k) -> d^2 L / dj_i dj_k over jet coordinates."""
        out = {}
        for a in self.chart.jets:
            da = self.jet_derivatives[a]
            for b in self.chart.jets:
                val = partial(da, b)
                if not val.is_zero():
                    out[(a, b)] = val
        return out

    def hessian_entry(self, a: Symbol, b: Symbol) -> Expr:
        return self.hessian.get((a, b), ZERO)

    @cached_property
    def hessian_rank(self) -> int:
        jets = self.chart.jets
        rows = [Row(a.name, "hessian", {b: self.hessian[(a, b)] for b in jets if (a, b) in self.hessian}, ZERO)
                for a in jets]
        return generic_rank(rows, jets)

    @property
    def is_regular(self) -> bool:
        return self.hessian_rank == len(self.chart.jets)


def poincare_cartan(theory: LagrangianTheory):
    return theory.theta, theory.omega, theory.energy, theory.hessian


@dataclass
class LegendreMap:
    theory: LagrangianTheory
    momenta: dict  # momentum symbol -> expression on J1
    pscalar_image: Expr
    regular: bool
    inverse: dict | None = None  # jet -> expression in momenta (regular case)
    primary: dict = field(default_factory=dict)  # momentum -> jet-free expression (singular case)
    solved_jets: dict = field(default_factory=dict)  # jet -> expression in retained momenta
    kernel: list = field(default_factory=list)  # Hessian kernel basis vectors
    assumptions: list = field(default_factory=list)

    def chart_map(self) -> ChartMap:
        """FL: J1 -> J1STAR."""
        tower = self.theory.tower
        target = tower.chart("J1STAR")
        images = {c: Expr.atom(c) for c in target.base + target.fields}
        images.update(self.momenta)
        return ChartMap(self.theory.chart, target, images)

    def extended_map(self) -> ChartMap:
        """Extended Legendre map J1 -> MPI."""
        tower = self.theory.tower
        target = tower.chart("MPI")
        images = {c: Expr.atom(c) for c in target.base + target.fields}
        images.update(self.momenta)
        images[tower.pscalar] = self.pscalar_image
        return ChartMap(self.theory.chart, target, images)

    def restricted_map(self, psub: BundleChart) -> ChartMap:
        """FL_o: J1 -> P_o (retained coordinates only)."""
        images = {c: Expr.atom(c) for c in psub.base + psub.fields}
        for p in psub.momenta:
            images[p] = self.momenta[p]
        return ChartMap(self.theory.chart, psub, images)


def legendre(theory: LagrangianTheory) -> LegendreMap:
    tower = theory.tower
    momenta = {}
    for (y, mu), j in tower.jets.items():
        w = tower.weight(y)
        dl = theory.jet_derivatives[j]
        momenta[tower.momentum(y, mu)] = dl / w if w != 1 else dl
    pscalar_image = theory.lagrangian
    for j, dl in theory.jet_derivatives.items():
        pscalar_image = pscalar_image - Expr.atom(j) * dl
    jets = set(theory.chart.jets)
    regular = theory.is_regular
    lmap = LegendreMap(theory, momenta, pscalar_image, regular)

    primary = {p: f for p, f in momenta.items() if not (f.depends_on() & jets)}
    dynamic = {p: f for p, f in momenta.items() if p not in primary}
    rows = []
    try:
        for p, f in dynamic.items():
            rows.append(make_row(Expr.atom(p) - f, jets, f"FL {p.name}", "legendre"))
    except NonlinearError as exc:
        raise NonlinearInversion(f"momenta are not linear in the multivelocities: {exc}") from exc
    result = solve_linear(rows)
    lmap.assumptions.extend(result.assumptions)
    if result.equations or result.candidates:
        raise NonlinearInversion("multivelocities cannot be solved from the momentum block")
    if regular:
        lmap.inverse = dict(result.bindings)
        if set(lmap.inverse) != jets:
            raise NonlinearInversion("regular Hessian but incomplete inversion")
    else:
        lmap.primary = primary
        lmap.solved_jets = dict(result.bindings)
        hess_rows = [Row(a.name, "hessian",
                         {b: theory.hessian[(a, b)] for b in theory.chart.jets if (a, b) in theory.hessian},
                         ZERO) for a in theory.chart.jets]
        try:
            lmap.kernel, notes = nullspace(hess_rows, theory.chart.jets)
            lmap.assumptions.extend(notes)
        except NotImplementedError as exc:
            lmap.assumptions.append(f"Hessian kernel not computed: {exc}")
    return lmap


# ---------------------------------------------------------------------------
# Hamiltonian side


class HamiltonianTheory:
    """Hamilton-Cartan forms on J1STAR (regular) or on a constraint chart P_o."""

    def __init__(self, chart: BundleChart, hamiltonian, legendre_map: LegendreMap | None = None,
                 assumptions=(), name: str = ""):
        if chart.space not in ("J1STAR", "PSUB"):
            raise WrongSpace(f"Hamiltonian theories live on J1STAR or P_o, not {chart.space}")
        self.chart = chart
        self.tower = chart.tower
        self.hamiltonian = as_expr(hamiltonian)
        stray = [a.name for a in self.hamiltonian.depends_on()
                 if isinstance(a, Symbol) and a.kind in ("base", "field", "jet", "momentum", "pscalar")
                 and a not in chart.position]
        if stray:
            raise WrongSpace(f"Hamiltonian uses coordinates outside {chart.space}: {stray}")
        self.legendre = legendre_map
        self.assumptions = list(assumptions)
        self.name = name

    @property
    def singular(self) -> bool:
        return self.chart.space == "PSUB"

    @cached_property
    def theta(self) -> DiffForm:
        if self.singular:
            base_theta = pullback(embedding(self.chart), canonical_theta(self.chart.parent))
        else:
            base_theta = canonical_theta(self.chart)
        return base_theta - volume(self.chart).scale(self.hamiltonian)

    @cached_property
    def omega(self) -> DiffForm:
        return -d(self.theta)

    def section(self) -> ChartMap:
        """Hamiltonian section h: J1STAR -> MPI, p = -H."""
        if self.singular:
            raise WrongSpace("the Hamiltonian section is defined on J1STAR")
        target = self.tower.chart("MPI")
        images = {c: Expr.atom(c) for c in self.chart.coords}
        images[self.tower.pscalar] = -self.hamiltonian
        return ChartMap(self.chart, target, images)

    def legendre_chart_map(self) -> ChartMap:
        if self.legendre is None:
            raise GeometryError("no Legendre map attached")
        if self.singular:
            return self.legendre.restricted_map(self.chart)
        return self.legendre.chart_map()


def hamiltonize(theory: LagrangianTheory, hamiltonian=None, lmap: LegendreMap | None = None) -> HamiltonianTheory:
    lmap = lmap or legendre(theory)
    tower = theory.tower
    energy = theory.energy
    jets = set(theory.chart.jets)
    if lmap.regular:
        chart = tower.chart("J1STAR")
        candidate = energy.subs(lmap.inverse)
    else:
        chart = restrict(tower.chart("J1STAR"), lmap.primary)
        candidate = energy.subs(lmap.solved_jets)
    if hamiltonian is not None:
        hamiltonian = as_expr(hamiltonian)
        fl = lmap.restricted_map(chart) if not lmap.regular else lmap.chart_map()
        residual = fl.pull(hamiltonian) - energy
        if not residual.is_zero():
            raise NoHamiltonianFound("supplied Hamiltonian does not pull back to the energy", residual)
        candidate = hamiltonian
    leftover = candidate.depends_on() & jets
    if leftover:
        raise NoHamiltonianFound(
            f"energy still depends on multivelocities {sorted(j.name for j in leftover)}", candidate)
    ham = HamiltonianTheory(chart, candidate, lmap, theory.assumptions + lmap.assumptions, theory.name)
    return ham


def pullback_matches(ham: HamiltonianTheory, theory: LagrangianTheory) -> bool:
    """FL^* Theta_H == Theta_L (or the restricted version on P_o)."""
    return pullback(ham.legendre_chart_map(), ham.theta) == theory.theta


def kernel_rows(omega: DiffForm, directions) -> tuple[list[Row], list[Symbol]]:
    """Linear system i(v) omega = 0 for v = sum v^z d/dz over ``directions``."""
    chart = omega.chart
    unknowns = [Symbol("unknown", "V", (chart.position[z],), name=f"V({z.name})", extra=z.name)
                for z in directions]
    per_monomial: dict = {}
    for z, u in zip(directions, unknowns):
        image = contract(coordinate_field(chart, z), omega)
        for mono, coeff in image.terms.items():
            per_monomial.setdefault(mono, {})[u] = coeff
    rows = [Row(str(mono), "kernel", coeffs, ZERO) for mono, coeffs in sorted(per_monomial.items())]
    return rows, unknowns


def kernel_dimension(omega: DiffForm, directions=None) -> int:
    directions = list(directions if directions is not None else omega.chart.coords)
    rows, unknowns = kernel_rows(omega, directions)
    return len(directions) - generic_rank(rows, unknowns)


__all__ = [
    "WrongSpace",
    "NonlinearInversion",
    "NoHamiltonianFound",
    "LagrangianTheory",
    "HamiltonianTheory",
    "LegendreMap",
    "liouville_forms",
    "canonical_theta",
    "poincare_cartan",
    "legendre",
    "hamiltonize",
    "pullback_matches",
    "kernel_rows",
    "kernel_dimension",
]
