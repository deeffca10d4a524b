"""Differential forms and vector fields on a chart.

A form is a map from strictly increasing tuples of coordinate positions
(canonical chart order) to nonzero coefficient expressions.
"""

from __future__ import annotations

from typing import Iterable, Mapping

from .bundle import BundleChart, ChartMap
from .symkernel import ZERO, Expr, Symbol, as_expr


class ExteriorError(Exception):
    pass


class ChartMismatch(ExteriorError):
    pass


class DegreeMismatch(ExteriorError):
    pass


def _merge_sign(left: tuple, right: tuple) -> int:
    """Sign of the permutation sorting ``left + right`` (both sorted, disjoint)."""
    inversions = 0
    j = 0
    for i in left:
        while j < len(right) and right[j] < i:
            j += 1
        inversions += j
    return -1 if inversions % 2 else 1


def _same_chart(a: BundleChart, b: BundleChart):
    if a is not b and a.coords != b.coords:
        raise ChartMismatch(f"{a.space} vs {b.space}")


class DiffForm:
    __slots__ = ("chart", "degree", "terms")

    def __init__(self, chart: BundleChart, degree: int, terms: Mapping | None = None):
        self.chart = chart
        self.degree = degree
        clean = {}
        for idx, coeff in (terms or {}).items():
            coeff = as_expr(coeff)
            if coeff.is_zero():
                continue
            if len(idx) != degree:
                raise DegreeMismatch(f"monomial {idx} in a {degree}-form")
            clean[tuple(idx)] = coeff
        self.terms = clean

    # -- constructors --------------------------------------------------------------
    @staticmethod
    def zero(chart: BundleChart, degree: int) -> "DiffForm":
        return DiffForm(chart, degree)

    @staticmethod
    def function(chart: BundleChart, f) -> "DiffForm":
        return DiffForm(chart, 0, {(): as_expr(f)})

    @staticmethod
    def basis(chart: BundleChart, coords: Iterable[Symbol], coeff=1) -> "DiffForm":
        """coeff * d c_1 ^ ... ^ d c_k in the given order (sign absorbed)."""
        positions = [chart.position[c] for c in coords]
        if len(set(positions)) != len(positions):
            return DiffForm(chart, len(positions))
        sign = 1
        arr = list(positions)
        for i in range(len(arr)):  # bubble sort parity
            for j in range(len(arr) - 1 - i):
                if arr[j] > arr[j + 1]:
                    arr[j], arr[j + 1] = arr[j + 1], arr[j]
                    sign = -sign
        return DiffForm(chart, len(arr), {tuple(arr): as_expr(coeff) * sign})

    # -- algebra ----------------------------------------------------------------------
    def is_zero(self) -> bool:
        return not self.terms

    def __add__(self, other: "DiffForm") -> "DiffForm":
        _same_chart(self.chart, other.chart)
        if self.degree != other.degree:
            raise DegreeMismatch(f"cannot add {self.degree}-form and {other.degree}-form")
        out = dict(self.terms)
        for idx, c in other.terms.items():
            out[idx] = out[idx] + c if idx in out else c
        return DiffForm(self.chart, self.degree, out)

    def __neg__(self) -> "DiffForm":
        return DiffForm(self.chart, self.degree, {k: -v for k, v in self.terms.items()})

    def __sub__(self, other: "DiffForm") -> "DiffForm":
        return self + (-other)

    def scale(self, f) -> "DiffForm":
        f = as_expr(f)
        return DiffForm(self.chart, self.degree, {k: v * f for k, v in self.terms.items()})

    def __mul__(self, f):
        return self.scale(f)

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, DiffForm):
            return NotImplemented
        return self.degree == other.degree and self.chart.coords == other.chart.coords \
            and self.terms == other.terms

    def __hash__(self):
        return hash((self.degree, frozenset(self.terms.items())))

    def map_coefficients(self, fn) -> "DiffForm":
        return DiffForm(self.chart, self.degree, {k: fn(v) for k, v in self.terms.items()})

    def coefficient(self, coords: Iterable[Symbol]) -> Expr:
        """Coefficient of d c_1 ^ ... ^ d c_k (given order)."""
        probe = DiffForm.basis(self.chart, coords)
        if probe.is_zero():
            return ZERO
        (idx, sign), = probe.terms.items()
        return self.terms.get(idx, ZERO) * sign

    def monomials(self):
        """Sorted (coordinate tuple, coefficient) pairs."""
        coords = self.chart.coords
        return [(tuple(coords[i] for i in idx), c) for idx, c in sorted(self.terms.items())]

    # -- printing ------------------------------------------------------------------------
    def text(self) -> str:
        return render_form(self, latex=False)

    def latex(self) -> str:
        return render_form(self, latex=True)

    def __repr__(self):
        return f"DiffForm[{self.degree}]({self.text()})"


class VectorField:
    __slots__ = ("chart", "components")

    def __init__(self, chart: BundleChart, components: Mapping | None = None):
        self.chart = chart
        comps = {}
        for c, v in (components or {}).items():
            if c not in chart.position:
                raise ChartMismatch(f"{getattr(c, 'name', c)} is not a coordinate of {chart.space}")
            v = as_expr(v)
            if not v.is_zero():
                comps[c] = v
        self.components = comps

    def component(self, c: Symbol) -> Expr:
        return self.components.get(c, ZERO)

    def __call__(self, f) -> Expr:
        """Directional derivative v(f)."""
        f = as_expr(f)
        total = ZERO
        deps = f.depends_on()
        for c, v in self.components.items():
            if c in deps:
                total = total + v * f.diff(c)
        return total

    def __add__(self, other: "VectorField") -> "VectorField":
        _same_chart(self.chart, other.chart)
        out = dict(self.components)
        for c, v in other.components.items():
            out[c] = out[c] + v if c in out else v
        return VectorField(self.chart, out)

    def __neg__(self):
        return VectorField(self.chart, {c: -v for c, v in self.components.items()})

    def __sub__(self, other):
        return self + (-other)

    def scale(self, f) -> "VectorField":
        f = as_expr(f)
        return VectorField(self.chart, {c: v * f for c, v in self.components.items()})

    def __eq__(self, other):
        if not isinstance(other, VectorField):
            return NotImplemented
        return self.chart.coords == other.chart.coords and self.components == other.components

    def __hash__(self):
        return hash(frozenset(self.components.items()))

    def map_components(self, fn) -> "VectorField":
        return VectorField(self.chart, {c: fn(v) for c, v in self.components.items()})

    def is_zero(self) -> bool:
        return not self.components

    def text(self) -> str:
        if not self.components:
            return "0"
        parts = []
        for c in sorted(self.components, key=lambda a: self.chart.position[a]):
            parts.append(f"({self.components[c].text()}) d/d{c.name}")
        return " + ".join(parts)

    def latex(self) -> str:
        if not self.components:
            return "0"
        parts = []
        for c in sorted(self.components, key=lambda a: self.chart.position[a]):
            parts.append(f"\\left({self.components[c].latex()}\\right)\\frac{{\\partial}}{{\\partial {c.latex}}}")
        return " + ".join(parts)

    def __repr__(self):
        return f"VectorField({self.text()})"


def coordinate_field(chart: BundleChart, c: Symbol) -> VectorField:
    return VectorField(chart, {c: 1})


# ---------------------------------------------------------------------------
# Operations


def wedge(a: DiffForm, b: DiffForm) -> DiffForm:
    _same_chart(a.chart, b.chart)
    out: dict = {}
    for i, ca in a.terms.items():
        for j, cb in b.terms.items():
            if set(i) & set(j):
                continue
            sign = _merge_sign(i, j)
            idx = tuple(sorted(i + j))
            term = ca * cb * sign
            out[idx] = out[idx] + term if idx in out else term
    return DiffForm(a.chart, a.degree + b.degree, out)


def d(a: DiffForm) -> DiffForm:
    chart = a.chart
    out: dict = {}
    for idx, f in a.terms.items():
        deps = f.depends_on()
        taken = set(idx)
        for v in deps:
            pos = chart.position.get(v)
            if pos is None or pos in taken:
                continue
            df = f.diff(v)
            if df.is_zero():
                continue
            below = sum(1 for i in idx if i < pos)
            new = tuple(sorted(idx + (pos,)))
            term = df if below % 2 == 0 else -df
            out[new] = out[new] + term if new in out else term
    return DiffForm(chart, a.degree + 1, out)


def contract(v: VectorField, a: DiffForm) -> DiffForm:
    _same_chart(v.chart, a.chart)
    if a.degree == 0:
        return DiffForm.zero(a.chart, 0)
    coords = a.chart.coords
    out: dict = {}
    for idx, f in a.terms.items():
        for k, pos in enumerate(idx):
            comp = v.components.get(coords[pos])
            if comp is None:
                continue
            new = idx[:k] + idx[k + 1:]
            term = f * comp if k % 2 == 0 else -(f * comp)
            out[new] = out[new] + term if new in out else term
    return DiffForm(a.chart, a.degree - 1, out)


def lie(v: VectorField, a: DiffForm) -> DiffForm:
    if a.degree == 0:
        return DiffForm.function(a.chart, v(a.terms.get((), ZERO)))
    return d(contract(v, a)) + contract(v, d(a))


def pullback(chart_map: ChartMap, a: DiffForm) -> DiffForm:
    target = chart_map.target
    _same_chart(a.chart, target)
    source = chart_map.source
    differential: dict = {}

    def dimage(pos):
        if pos not in differential:
            c = target.coords[pos]
            img = chart_map.images[c]
            differential[pos] = d(DiffForm.function(source, img))
        return differential[pos]

    total = DiffForm.zero(source, a.degree)
    for idx, f in a.terms.items():
        piece = DiffForm.function(source, chart_map.pull(f))
        for pos in idx:
            piece = wedge(piece, dimage(pos))
            if piece.is_zero():
                break
        else:
            total = total + piece
    return total


# ---------------------------------------------------------------------------
# Volume forms


def volume(chart: BundleChart) -> DiffForm:
    """d^m x."""
    return DiffForm(chart, chart.m, {tuple(range(chart.m)): 1})


def volume_minus(chart: BundleChart, mu: int) -> DiffForm:
    """d^{m-1} x_mu = i(d/dx^mu) d^m x."""
    return contract(coordinate_field(chart, chart.base[mu]), volume(chart))


def volume_minus2(chart: BundleChart, mu: int, nu: int) -> DiffForm:
    """d^{m-2} x_{mu nu} = i(d/dx^nu) i(d/dx^mu) d^m x."""
    return contract(coordinate_field(chart, chart.base[nu]), volume_minus(chart, mu))


def one_form(chart: BundleChart, c: Symbol, coeff=1) -> DiffForm:
    return DiffForm.basis(chart, [c], coeff)


# ---------------------------------------------------------------------------
# Printing


def _base_label(missing: tuple, m: int, latex: bool) -> str:
    k = len(missing)
    if k == 0:
        return "\\mathrm{d}^{%d}x" % m if latex else f"d^{m}x"
    subs = "".join(map(str, missing)) if latex else ",".join(map(str, missing))
    if latex:
        return "\\mathrm{d}^{%d}x_{%s}" % (m - k, subs)
    return f"d^{m - k}x_{{{subs}}}"


def _diff_name(c: Symbol, latex: bool) -> str:
    return f"\\mathrm{{d}}{c.latex}" if latex else f"d{c.name}"


def render_form(a: DiffForm, latex: bool = False) -> str:
    """Write base differentials as d^{m-k}x_{mu...} (k <= 2) after the fiber part.

    With d^{m-1}x_mu = i(d_mu) d^m x and d^{m-2}x_{mu nu} = i(d_nu) i(d_mu) d^m x,
    a canonical monomial dB ^ dF equals (-1)^{|B||F|} s dF ^ d^{m-k}x_{...},
    where dB = s d^{m-k}x_{...}.
    """
    if not a.terms:
        return "0"
    chart = a.chart
    m = chart.m
    coords = chart.coords
    joiner = " \\wedge " if latex else "^"
    pieces = []
    for idx, coeff in sorted(a.terms.items()):
        base = [i for i in idx if i < m]
        fiber = [i for i in idx if i >= m]
        missing = tuple(mu for mu in range(m) if mu not in base)
        if base and len(missing) <= 2:
            ref = volume(chart)
            for mu in missing:
                ref = contract(coordinate_field(chart, coords[mu]), ref)
            ((_, ref_sign),) = ref.terms.items()
            sign = ref_sign.const_value() * (-1 if (len(base) * len(fiber)) % 2 else 1)
            names = [_diff_name(coords[i], latex) for i in fiber] + [_base_label(missing, m, latex)]
            coeff = coeff * sign
        else:
            names = [_diff_name(coords[i], latex) for i in idx]
        coeff_text = coeff.latex() if latex else coeff.text()
        body = joiner.join(names)
        pieces.append(f"({coeff_text}) {body}" if body else f"({coeff_text})")
    return " + ".join(pieces)
