"""Canonical lifts of generators xi_E = -xi^mu d/dx^mu - xi^A d/dy^A.

Momentum components carry the tensor weights of the stored field components
so that the lifts preserve the weighted canonical forms exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from .bundle import BundleChart, Tower, embedding
from .exterior import DiffForm, VectorField, contract, d, one_form, volume, volume_minus, volume_minus2, wedge
from .linalg import in_span
from .symkernel import ZERO, Expr, Symbol, as_expr


class LiftError(Exception):
    pass


class NotProjectable(LiftError):
    pass


class IndexArityMismatch(LiftError):
    pass


class LiftNotTangent(LiftError):
    def __init__(self, message: str, residuals: Mapping):
        super().__init__(message)
        self.residuals = dict(residuals)


@dataclass(frozen=True)
class GeneratorSpec:
    """Infinitesimal generator data.

    ``base[mu]`` is xi^mu and ``fiber[y]`` is the explicit xi^A of a stored
    field component; with ``transport`` the tensor transport of every base
    slot is added to the fiber part.
    """

    name: str
    base: Mapping = field(default_factory=dict)
    fiber: Mapping = field(default_factory=dict)
    transport: bool = False
    params: tuple = ()


def _tensor_value(tower: Tower, family: str, index: tuple) -> Expr:
    sign, sym = tower.field(family, index)
    if not sign:
        return ZERO
    return Expr.atom(sym) * sign


def transport_term(tower: Tower, y: Symbol, base: Mapping) -> Expr:
    """Tensor transport Delta of a stored component along xi^mu.

    Upper base slots contribute d_lam xi^mu T^{..lam..}; lower base slots
    contribute -d_nu xi^lam T_{..lam..}.
    """
    fam, idx = tower.field_info[y]
    coords = tower.base
    total = ZERO
    for k, slot in enumerate(fam.slots):
        if slot.range_name != "base":
            continue
        if slot.size != tower.m:
            raise IndexArityMismatch(f"slot {k} of {fam.name} does not span the base")
        for lam in range(tower.m):
            replaced = idx[:k] + (lam,) + idx[k + 1:]
            value = _tensor_value(tower, fam.name, replaced)
            if value.is_zero():
                continue
            if slot.position == "^":
                total = total + as_expr(base.get(idx[k], ZERO)).diff(coords[lam]) * value
            else:
                total = total - as_expr(base.get(lam, ZERO)).diff(coords[idx[k]]) * value
    return total


def lift_to_E(gen: GeneratorSpec, tower: Tower) -> VectorField:
    chart = tower.chart("E")
    comps = {}
    for mu, value in gen.base.items():
        if not 0 <= mu < tower.m:
            raise IndexArityMismatch(f"base index {mu} out of range")
        comps[tower.base[mu]] = -as_expr(value)
    for y in tower.fields:
        value = as_expr(gen.fiber.get(y, ZERO))
        if gen.transport:
            value = value + transport_term(tower, y, gen.base)
        if not value.is_zero():
            comps[y] = -value
    stray = [y for y in gen.fiber if y not in tower.field_info]
    if stray:
        raise IndexArityMismatch(f"fiber components for non-field symbols {stray}")
    return VectorField(chart, comps)


def _split(xi_e: VectorField) -> tuple[dict, dict]:
    """(xi^mu, xi^A) from xi_E, with the projectability check."""
    chart = xi_e.chart
    if chart.space != "E":
        raise LiftError(f"expected a vector field on E, got {chart.space}")
    fibre = set(chart.fields)
    base = {}
    for mu, x in enumerate(chart.base):
        value = -xi_e.component(x)
        if value.depends_on() & fibre:
            raise NotProjectable(f"base component along {x.name} depends on fiber coordinates")
        base[mu] = value
    return base, {y: -xi_e.component(y) for y in chart.fields}


def jet_prolong(xi_e: VectorField) -> VectorField:
    base, fiber = _split(xi_e)
    tower = xi_e.chart.tower
    chart = tower.chart("J1")
    xs = tower.base
    comps = {c: v for c, v in xi_e.components.items()}
    for y in tower.fields:
        for mu in range(tower.m):
            value = fiber[y].diff(xs[mu])
            for nu in range(tower.m):
                value = value - Expr.atom(tower.jet(y, nu)) * base[nu].diff(xs[mu])
            for z in tower.fields:
                dz = fiber[y].diff(z)
                if not dz.is_zero():
                    value = value + Expr.atom(tower.jet(z, mu)) * dz
            if not value.is_zero():
                comps[tower.jet(y, mu)] = -value
    return VectorField(chart, comps)


def _momentum_components(xi_e: VectorField, tower: Tower) -> dict:
    base, fiber = _split(xi_e)
    xs = tower.base
    comps = {}
    divergence = ZERO
    for mu in range(tower.m):
        divergence = divergence + base[mu].diff(xs[mu])
    for a in tower.fields:
        wa = tower.weight(a)
        for mu in range(tower.m):
            value = -Expr.atom(tower.momentum(a, mu)) * divergence
            for nu in range(tower.m):
                value = value + base[mu].diff(xs[nu]) * Expr.atom(tower.momentum(a, nu))
            for b in tower.fields:
                db = fiber[b].diff(a)
                if db.is_zero():
                    continue
                ratio = Fraction(tower.weight(b), wa)
                value = value - db * Expr.atom(tower.momentum(b, mu)) * ratio
            if not value.is_zero():
                comps[tower.momentum(a, mu)] = -value
    return comps


def lift_to_MPi(xi_e: VectorField) -> VectorField:
    tower = xi_e.chart.tower
    base, fiber = _split(xi_e)
    xs = tower.base
    comps = dict(xi_e.components)
    comps.update(_momentum_components(xi_e, tower))
    p_comp = ZERO
    for mu in range(tower.m):
        p_comp = p_comp + base[mu].diff(xs[mu]) * Expr.atom(tower.pscalar)
        for a in tower.fields:
            da = fiber[a].diff(xs[mu])
            if not da.is_zero():
                p_comp = p_comp + da * Expr.atom(tower.momentum(a, mu)) * tower.weight(a)
    if not p_comp.is_zero():
        comps[tower.pscalar] = p_comp
    return VectorField(tower.chart("MPI"), comps)


def lift_to_J1PiStar(xi_e: VectorField) -> VectorField:
    tower = xi_e.chart.tower
    comps = dict(xi_e.components)
    comps.update(_momentum_components(xi_e, tower))
    return VectorField(tower.chart("J1STAR"), comps)


def restriction_residuals(xi_e: VectorField, psub: BundleChart) -> tuple[VectorField, dict]:
    """Restricted lift on P_o and the tangency residual of each eliminated momentum."""
    if psub.space != "PSUB":
        raise LiftError("restricted lifts need a PSUB chart")
    full = lift_to_J1PiStar(xi_e) if psub.parent.space == "J1STAR" else lift_to_MPi(xi_e)
    emb = embedding(psub)
    comps = {c: emb.pull(full.component(c)) for c in psub.coords}
    restricted = VectorField(psub, comps)
    residuals = {}
    for q, f in psub.substitutions.items():
        residual = emb.pull(full.component(q)) - restricted(f)
        if not residual.is_zero():
            residuals[q] = residual
    return restricted, residuals


def lift_to_PSub(xi_e: VectorField, psub: BundleChart, strict: bool = True) -> VectorField:
    if psub.space != "PSUB":
        if psub.space == "J1STAR":
            return lift_to_J1PiStar(xi_e)
        raise LiftError(f"expected a constraint chart, got {psub.space}")
    restricted, residuals = restriction_residuals(xi_e, psub)
    if residuals and strict:
        raise LiftNotTangent(f"lift is not tangent along {sorted(q.name for q in residuals)}", residuals)
    return restricted


def gamma_form(xi_e: VectorField) -> DiffForm:
    """xi^nu w_A p_A^mu dy^A ^ d^{m-2}x_{mu nu} - (w_A xi^A p_A^mu + xi^mu p) d^{m-1}x_mu."""
    tower = xi_e.chart.tower
    base, fiber = _split(xi_e)
    chart = tower.chart("MPI")
    m = tower.m
    out = DiffForm.zero(chart, m - 1)
    p = Expr.atom(tower.pscalar)
    for mu in range(m):
        coeff = base[mu] * p
        for a in tower.fields:
            if not fiber[a].is_zero():
                coeff = coeff + fiber[a] * Expr.atom(tower.momentum(a, mu)) * tower.weight(a)
        if not coeff.is_zero():
            out = out - volume_minus(chart, mu).scale(coeff)
    if m >= 2:
        for a in tower.fields:
            wa = tower.weight(a)
            for mu in range(m):
                for nu in range(m):
                    if mu == nu or base[nu].is_zero():
                        continue
                    coeff = base[nu] * Expr.atom(tower.momentum(a, mu)) * wa
                    out = out + wedge(one_form(chart, a, coeff), volume_minus2(chart, mu, nu))
    return out


def push_components(v: VectorField, chart_map, target_coords: Sequence[Symbol]) -> dict:
    """Components of the pushforward along ``chart_map`` as functions on the source."""
    return {c: v(chart_map.images[c]) for c in target_coords}


@dataclass
class ProjectionReport:
    lagrangian_variation: Expr
    invariant: bool
    differences: dict
    related: bool | None
    on_constraints: bool = False
    notes: list = field(default_factory=list)


def check_legendre_projection(lagrangian_theory, hamiltonian_theory, xi_e: VectorField,
                              final_constraints: Sequence[Expr] = ()) -> ProjectionReport:
    """Compare the Legendre pushforward of X_xi with the Hamiltonian-side lift."""
    x_lift = jet_prolong(xi_e)
    chart = lagrangian_theory.chart
    density = volume(chart).scale(lagrangian_theory.lagrangian)
    variation_form = contract(x_lift, d(density)) + d(contract(x_lift, density))
    variation = variation_form.coefficient(chart.base)
    invariant = variation.is_zero()
    fl = hamiltonian_theory.legendre_chart_map()
    target = hamiltonian_theory.chart
    if target.space == "PSUB":
        y_lift = lift_to_PSub(xi_e, target, strict=False)
    else:
        y_lift = lift_to_J1PiStar(xi_e)
    pushed = push_components(x_lift, fl, target.coords)
    differences = {}
    for c in target.coords:
        diff = pushed[c] - fl.pull(y_lift.component(c))
        if not diff.is_zero():
            differences[c] = diff
    report = ProjectionReport(variation, invariant, differences, None)
    if not invariant:
        report.notes.append("Lagrangian density is not invariant; relatedness not claimed")
    if not differences:
        report.related = True
    elif final_constraints and all(in_span(v, final_constraints) for v in differences.values()):
        report.related = True
        report.on_constraints = True
    else:
        report.related = False
    return report


def tangency_residuals(v: VectorField, constraints: Sequence[Expr]) -> list:
    """v(c) for each constraint, paired with whether it vanishes on the constraint set."""
    out = []
    for c in constraints:
        value = v(c)
        out.append((c, value, in_span(value, constraints)))
    return out


__all__ = [
    "GeneratorSpec",
    "LiftError",
    "NotProjectable",
    "IndexArityMismatch",
    "LiftNotTangent",
    "transport_term",
    "lift_to_E",
    "jet_prolong",
    "lift_to_MPi",
    "lift_to_J1PiStar",
    "lift_to_PSub",
    "restriction_residuals",
    "gamma_form",
    "check_legendre_projection",
    "ProjectionReport",
    "tangency_residuals",
]
