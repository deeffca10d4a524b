"""Coordinate charts on M, E, J1(pi), M(pi), J1(pi)* and constraint submanifolds.

Coordinates are ordered: base x^mu, fields y^A (family order, row-major
component order), then jets y^A_mu (A-major) or multimomenta p_A^mu
(A-major), then the scalar momentum p.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Iterable, Mapping

from .symkernel import Expr, Symbol, as_expr

SPACES = ("M", "E", "J1", "MPI", "J1STAR", "PSUB")


class BundleError(Exception):
    pass


class DuplicateFieldName(BundleError):
    pass


class ZeroDimensionalBase(BundleError):
    pass


class CircularConstraint(BundleError):
    pass


class UnknownCoordinate(BundleError):
    pass


class IncompleteMap(BundleError):
    pass


@dataclass(frozen=True)
class Slot:
    """One index slot of a field family: range label, size, and position."""

    range_name: str
    size: int
    position: str = "_"  # "^" upper, "_" lower

    def __post_init__(self):
        if self.position not in ("^", "_"):
            raise ValueError("slot position must be '^' or '_'")
        if self.size < 1:
            raise ValueError("slot range must be positive")


@dataclass(frozen=True)
class FieldFamily:
    """Indexed family of field components with pairwise index symmetries.

    ``symmetries`` holds ``(i, j, kind)`` with ``kind`` in {"sym", "anti"};
    the pairs must be disjoint.
    """

    name: str
    slots: tuple = ()
    symmetries: tuple = ()

    def __post_init__(self):
        used = set()
        for i, j, kind in self.symmetries:
            if kind not in ("sym", "anti"):
                raise ValueError(f"unknown symmetry kind {kind!r}")
            if not (0 <= i < len(self.slots) and 0 <= j < len(self.slots)) or i == j:
                raise ValueError(f"bad symmetry slots ({i}, {j}) for {self.name}")
            if {i, j} & used:
                raise ValueError("symmetry pairs must be disjoint")
            if self.slots[i].size != self.slots[j].size:
                raise ValueError("paired slots must share a range")
            used |= {i, j}

    @property
    def rank(self) -> int:
        return len(self.slots)

    def canonical(self, index: tuple) -> tuple[int, tuple | None]:
        """Map a tensor index to (sign, stored component); sign 0 means identically zero."""
        if len(index) != self.rank:
            raise ValueError(f"{self.name} expects {self.rank} indices, got {len(index)}")
        for k, slot in zip(index, self.slots):
            if not 0 <= k < slot.size:
                raise IndexError(f"index {k} out of range for {self.name}")
        idx = list(index)
        sign = 1
        for i, j, kind in self.symmetries:
            lo, hi = min(i, j), max(i, j)
            if idx[lo] > idx[hi]:
                idx[lo], idx[hi] = idx[hi], idx[lo]
                if kind == "anti":
                    sign = -sign
            elif idx[lo] == idx[hi] and kind == "anti":
                return 0, None
        return sign, tuple(idx)

    def components(self) -> list[tuple]:
        out = []
        for index in product(*(range(s.size) for s in self.slots)):
            sign, canon = self.canonical(index)
            if sign and canon == index:
                out.append(index)
        return out

    def all_indices(self) -> list[tuple]:
        return list(product(*(range(s.size) for s in self.slots)))

    def weight(self, index: tuple) -> int:
        """Number of tensor index tuples represented by the stored component."""
        return sum(1 for t in self.all_indices() if self.canonical(t)[1] == index)


def _latex_indexed(head: str, ups: list, downs: list) -> str:
    out = head
    if ups:
        out += "^{" + " ".join(map(str, ups)) + "}"
    if downs:
        out += "_{" + " ".join(map(str, downs)) + "}"
    return out


def _split_positions(family: FieldFamily, index: tuple) -> tuple[list, list]:
    ups = [k for k, s in zip(index, family.slots) if s.position == "^"]
    downs = [k for k, s in zip(index, family.slots) if s.position == "_"]
    return ups, downs


class Tower:
    """Shared coordinate symbols of all spaces built from one theory."""

    def __init__(self, base_dim: int, families: Iterable[FieldFamily], base_name: str = "x",
                 params: Iterable[Symbol] = ()):
        if base_dim < 1:
            raise ZeroDimensionalBase("base dimension must be at least 1")
        families = tuple(families)
        names = [f.name for f in families]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes or base_name in names or "p" in names:
            raise DuplicateFieldName(f"duplicate or reserved field names: {dupes or [base_name]}")
        self.m = base_dim
        self.base_name = base_name
        self.families = families
        self.params = tuple(params)
        self.base = tuple(
            Symbol("base", base_name, (mu,), name=f"{base_name}[{mu}]", latex=f"{base_name}^{{{mu}}}")
            for mu in range(base_dim))

        self.fields: list[Symbol] = []
        self.field_info: dict[Symbol, tuple[FieldFamily, tuple]] = {}
        for fam in families:
            for idx in fam.components():
                name = fam.name if not idx else f"{fam.name}[{','.join(map(str, idx))}]"
                ups, downs = _split_positions(fam, idx)
                sym = Symbol("field", fam.name, idx, name=name, latex=_latex_indexed(fam.name, ups, downs))
                self.fields.append(sym)
                self.field_info[sym] = (fam, idx)
        self.fields = tuple(self.fields)
        self.n = len(self.fields)

        self.jets: dict[tuple[Symbol, int], Symbol] = {}
        self.momenta: dict[tuple[Symbol, int], Symbol] = {}
        self.jet_info: dict[Symbol, tuple[Symbol, int]] = {}
        self.momentum_info: dict[Symbol, tuple[Symbol, int]] = {}
        for y in self.fields:
            fam, idx = self.field_info[y]
            ups, downs = _split_positions(fam, idx)
            inner = ",".join(map(str, idx))
            for mu in range(base_dim):
                jet = Symbol("jet", fam.name, idx + (mu,), name=f"{fam.name}[{inner};{mu}]",
                             latex=_latex_indexed(fam.name, ups, downs + [f",{mu}"]).replace(" ,", ","))
                mom = Symbol("momentum", fam.name, idx + (mu,), name=f"p({fam.name}[{inner};{mu}])",
                             latex=f"p_{{{_latex_indexed(fam.name, ups, downs)}}}^{{{mu}}}")
                self.jets[(y, mu)] = jet
                self.momenta[(y, mu)] = mom
                self.jet_info[jet] = (y, mu)
                self.momentum_info[mom] = (y, mu)
        self.pscalar = Symbol("pscalar", "p", (), name="p", latex="p")
        self._charts: dict[str, BundleChart] = {}

    # -- lookup helpers --------------------------------------------------------
    def weight(self, y: Symbol) -> int:
        fam, idx = self.field_info[y]
        return fam.weight(idx)

    def family(self, name: str) -> FieldFamily:
        for fam in self.families:
            if fam.name == name:
                return fam
        raise KeyError(name)

    def field(self, family: str, index: tuple = ()) -> tuple[int, Symbol | None]:
        """Signed stored component for a tensor index of ``family``."""
        fam = self.family(family)
        sign, canon = fam.canonical(tuple(index))
        if not sign:
            return 0, None
        if not hasattr(self, "_component_lookup"):
            self._component_lookup = {(f.name, idx): y for y, (f, idx) in self.field_info.items()}
        return sign, self._component_lookup[(fam.name, canon)]

    def jet(self, y: Symbol, mu: int) -> Symbol:
        return self.jets[(y, mu)]

    def momentum(self, y: Symbol, mu: int) -> Symbol:
        return self.momenta[(y, mu)]

    # -- charts -------------------------------------------------------------------
    def chart(self, space: str) -> "BundleChart":
        if space not in self._charts:
            jets = tuple(self.jets[(y, mu)] for y in self.fields for mu in range(self.m))
            moms = tuple(self.momenta[(y, mu)] for y in self.fields for mu in range(self.m))
            layout = {
                "M": (self.base, (), (), (), None),
                "E": (self.base, self.fields, (), (), None),
                "J1": (self.base, self.fields, jets, (), None),
                "MPI": (self.base, self.fields, (), moms, self.pscalar),
                "J1STAR": (self.base, self.fields, (), moms, None),
            }
            if space not in layout:
                raise BundleError(f"unknown space {space!r}")
            base, fields, jet_coords, mom_coords, p = layout[space]
            self._charts[space] = BundleChart(self, space, base, fields, jet_coords, mom_coords, p)
        return self._charts[space]

    def projection(self, source: str, target: str) -> "ChartMap":
        """Coordinate-forgetting projection between natural charts."""
        allowed = {("E", "M"), ("J1", "E"), ("J1", "M"), ("MPI", "J1STAR"), ("MPI", "E"),
                   ("J1STAR", "E"), ("MPI", "M"), ("J1STAR", "M")}
        if (source, target) not in allowed:
            raise BundleError(f"no natural projection {source} -> {target}")
        src, tgt = self.chart(source), self.chart(target)
        return ChartMap(src, tgt, {c: Expr.atom(c) for c in tgt.coords})


class BundleChart:
    """A concrete chart; immutable after construction."""

    def __init__(self, tower: Tower, space: str, base, fields, jets, momenta, pscalar,
                 substitutions: Mapping | None = None, parent: "BundleChart | None" = None):
        self.tower = tower
        self.space = space
        self.m = tower.m
        self.base = tuple(base)
        self.fields = tuple(fields)
        self.jets = tuple(jets)
        self.momenta = tuple(momenta)
        self.pscalar = pscalar
        self.params = tower.params
        self.substitutions = dict(substitutions or {})
        self.parent = parent
        coords = list(self.base) + list(self.fields) + list(self.jets) + list(self.momenta)
        if pscalar is not None:
            coords.append(pscalar)
        names = [c.name for c in coords]
        if len(set(names)) != len(names):
            raise BundleError("coordinate names must be unique within a chart")
        self.coords = tuple(coords)
        self.position = {c: i for i, c in enumerate(self.coords)}
        self._declared = set(self.coords) | set(self.params)

    @property
    def dim(self) -> int:
        return len(self.coords)

    def declares(self, sym) -> bool:
        return sym in self._declared

    def is_base(self, c: Symbol) -> bool:
        return c.kind == "base"

    def fiber_coords(self) -> tuple:
        return self.coords[self.m:]

    def __repr__(self):
        return f"BundleChart({self.space}, dim={self.dim})"


class ChartMap:
    """Map ``source -> target`` given by target coordinates as source expressions."""

    def __init__(self, source: BundleChart, target: BundleChart, images: Mapping):
        missing = [c.name for c in target.coords if c not in images]
        if missing:
            raise IncompleteMap(f"no image for target coordinates {missing}")
        self.source = source
        self.target = target
        self.images = {c: as_expr(images[c]) for c in target.coords}
        for c, img in self.images.items():
            stray = [a for a in img.depends_on()
                     if isinstance(a, Symbol) and a.kind in ("base", "field", "jet", "momentum", "pscalar")
                     and not source.declares(a)]
            if stray:
                raise UnknownCoordinate(f"image of {c.name} uses {stray} outside {source.space}")

    def pull(self, e: Expr) -> Expr:
        return as_expr(e).subs({c: img for c, img in self.images.items() if img != Expr.atom(c)})

    def then(self, other: "ChartMap") -> "ChartMap":
        """Composite ``other o self``."""
        if other.source is not self.target and other.source.coords != self.target.coords:
            raise BundleError("maps do not compose")
        return ChartMap(self.source, other.target, {c: self.pull(img) for c, img in other.images.items()})

    def same_as(self, other: "ChartMap") -> bool:
        return (self.source.coords == other.source.coords and self.target.coords == other.target.coords
                and all(self.images[c] == other.images[c] for c in self.target.coords))


def build_tower(base_dim: int, families: Iterable[FieldFamily], base_name: str = "x",
                params: Iterable[Symbol] = ()) -> Tower:
    return Tower(base_dim, families, base_name, params)


def restrict(chart: BundleChart, constraints: Mapping) -> BundleChart:
    """Graph-type constraint submanifold p_i = f_i(retained coordinates)."""
    if chart.space not in ("J1STAR", "MPI"):
        raise BundleError("constraints restrict multimomentum charts only")
    subs = {}
    for mom, rhs in constraints.items():
        if mom not in chart.momenta and mom != chart.pscalar:
            raise UnknownCoordinate(f"{getattr(mom, 'name', mom)} is not a momentum of {chart.space}")
        subs[mom] = as_expr(rhs)
    if not subs:
        return chart
    eliminated = set(subs)
    for mom, rhs in subs.items():
        for atom in rhs.depends_on():
            if atom in eliminated:
                raise CircularConstraint(f"constraint for {mom.name} references eliminated {atom.name}")
            if isinstance(atom, Symbol) and atom.kind in ("base", "field", "jet", "momentum", "pscalar") \
                    and not chart.declares(atom):
                raise UnknownCoordinate(f"{atom.name} is not a coordinate of {chart.space}")
    kept = tuple(p for p in chart.momenta if p not in eliminated)
    pscalar = chart.pscalar if chart.pscalar not in eliminated else None
    return BundleChart(chart.tower, "PSUB", chart.base, chart.fields, (), kept, pscalar,
                       substitutions=subs, parent=chart)


def embedding(psub: BundleChart) -> ChartMap:
    """The inclusion j: P -> parent chart as substitution of eliminated momenta."""
    if psub.space != "PSUB":
        raise BundleError("embedding needs a PSUB chart")
    images = {c: (psub.substitutions[c] if c in psub.substitutions else Expr.atom(c))
              for c in psub.parent.coords}
    return ChartMap(psub, psub.parent, images)
