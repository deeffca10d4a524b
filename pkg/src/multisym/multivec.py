"""Locally decomposable m-multivector fields X = X_0 ^ ... ^ X_{m-1}.

Factor ``a`` has component 1 along d/dx^a and 0 along the other base
directions, so i(X) d^m x = 1.  Fiber components may contain unknown
coefficient symbols.
"""

from __future__ import annotations

from typing import Mapping, Sequence

from .bundle import BundleChart
from .exterior import ChartMismatch, DiffForm, VectorField, contract, d
from .symkernel import Expr, Symbol


def unknown_symbol(factor: int, coord: Symbol, chart: BundleChart) -> Symbol:
    """Unknown coefficient of factor ``factor`` along ``coord``.

    Field directions use the letter D, all other fiber directions H.
    """
    letter = "D" if coord.kind == "field" else "H"
    pos = chart.position[coord]
    return Symbol("unknown", letter, (factor, pos), name=f"{letter}{factor}({coord.name})",
                  latex=f"{letter}_{{{factor}}}^{{{coord.latex}}}", extra=coord.name)


class MultiVectorField:
    __slots__ = ("chart", "factors")

    def __init__(self, chart: BundleChart, fiber_components: Sequence[Mapping]):
        m = chart.m
        if len(fiber_components) != m:
            raise ValueError(f"expected {m} factors, got {len(fiber_components)}")
        factors = []
        for a, comps in enumerate(fiber_components):
            if any(c in chart.base for c in comps):
                raise ValueError("base components are fixed by the transversality normalization")
            full = {chart.base[a]: 1}
            full.update(comps)
            factors.append(VectorField(chart, full))
        self.chart = chart
        self.factors = tuple(factors)

    @staticmethod
    def general(chart: BundleChart, fixed: Sequence[Mapping] | None = None) -> "MultiVectorField":
        """Multivector with an unknown coefficient in every free fiber slot."""
        fixed = fixed or [{} for _ in range(chart.m)]
        comps = []
        for a in range(chart.m):
            row = {}
            for c in chart.fiber_coords():
                row[c] = fixed[a][c] if c in fixed[a] else Expr.atom(unknown_symbol(a, c, chart))
            comps.append(row)
        return MultiVectorField(chart, comps)

    def unknowns(self) -> list:
        out = set()
        for factor in self.factors:
            for v in factor.components.values():
                out |= {a for a in v.atoms() if isinstance(a, Symbol) and a.kind == "unknown"}
        return sorted(out, key=lambda s: s.key)

    def fiber(self, a: int) -> dict:
        return {c: v for c, v in self.factors[a].components.items() if c not in self.chart.base}

    def substitute(self, bindings: Mapping) -> "MultiVectorField":
        return MultiVectorField(self.chart, [{c: v.subs(bindings) for c, v in self.fiber(a).items()}
                                             for a in range(self.chart.m)])

    def text(self) -> str:
        return " ^ ".join(f"[{f.text()}]" for f in self.factors)


def contract_multi(X: MultiVectorField, a: DiffForm) -> DiffForm:
    """i(X_{m-1}) ... i(X_0) a (innermost factor first)."""
    if X.chart.coords != a.chart.coords:
        raise ChartMismatch(f"{X.chart.space} vs {a.chart.space}")
    m = X.chart.m
    if a.degree < m:
        return DiffForm.zero(a.chart, 0)
    out = a
    for factor in X.factors:
        out = contract(factor, out)
        if out.is_zero():
            return DiffForm.zero(a.chart, a.degree - m)
    return out


def lie_multi(X: MultiVectorField, a: DiffForm) -> DiffForm:
    """Graded Lie derivative L(X)a = d i(X) a - (-1)^m i(X) d a."""
    m = X.chart.m
    k = a.degree
    if k + 1 < m:
        return DiffForm.zero(a.chart, 0)
    second = contract_multi(X, d(a))
    first = d(contract_multi(X, a)) if k >= m else DiffForm.zero(a.chart, k + 1 - m)
    return first - second if m % 2 == 0 else first + second


def factor_derivative(X: MultiVectorField, a: int, f) -> Expr:
    """X_a(f) for a scalar f."""
    return X.factors[a](f)
