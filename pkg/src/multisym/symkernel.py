"""Exact symbolic scalar arithmetic.

An expression is a sparse Laurent polynomial with rational coefficients over
*atoms*.  Atoms are plain symbols (coordinates, parameters, unknown
coefficients, section markers), derived quantities (opaque functions of
coordinates that carry derivative rules and algebraic identities, such as
sqrt(-det g)), and function applications (undefined functions such as
``xi[0](x[0], x[1])`` or ``exp(u)``).

Every ``Expr`` is kept in canonical form: expanded, with sorted factors,
collected coefficients and all registered identities applied to fixpoint.
Equality of expressions is therefore structural equality.
"""

from __future__ import annotations

import os
from fractions import Fraction
from typing import Callable, Iterable, Mapping

Coeff = "int | Fraction"

DEFAULT_MAX_REWRITE = 64

# Class ranks fix the canonical order of factors inside a monomial.
RANK = {
    "param": 0,
    "base": 1,
    "field": 2,
    "jet": 3,
    "momentum": 4,
    "pscalar": 5,
    "derived": 6,
    "function": 7,
    "unknown": 8,
    "marker": 9,
}


class KernelError(Exception):
    """Base class of symbolic kernel errors."""


class UnknownSymbol(KernelError):
    pass


class UnboundSymbol(KernelError):
    pass


class DivisionByZero(KernelError, ZeroDivisionError):
    pass


class NotInvertible(KernelError):
    pass


class RewriteDepthExceeded(KernelError):
    pass


class NonlinearError(KernelError):
    pass


class NotRational(KernelError):
    pass


def _coeff(value) -> "int | Fraction":
    if isinstance(value, bool):
        raise TypeError("booleans are not coefficients")
    if isinstance(value, int):
        return value
    if isinstance(value, Fraction):
        return value.numerator if value.denominator == 1 else value
    raise TypeError(f"unsupported coefficient type {type(value).__name__}")


def max_rewrite_depth() -> int:
    raw = os.environ.get("MULTISYM_MAX_REWRITE")
    if raw is None:
        return DEFAULT_MAX_REWRITE
    try:
        depth = int(raw)
    except ValueError as exc:
        raise ValueError(f"MULTISYM_MAX_REWRITE must be an integer, got {raw!r}") from exc
    if depth < 1:
        raise ValueError("MULTISYM_MAX_REWRITE must be positive")
    return depth


# ---------------------------------------------------------------------------
# Atoms


class Atom:
    """Indivisible factor of a monomial.  Identity is the ``key`` tuple."""

    __slots__ = ("key", "name", "latex", "_hash", "_dcache")

    laurent = False  # negative exponents allowed (nonzero parameters)

    def __init__(self, key: tuple, name: str, latex: str | None = None):
        self.key = key
        self.name = name
        self.latex = latex if latex is not None else name
        self._hash = hash(key)
        self._dcache: dict = {}

    def __eq__(self, other):
        return self is other or (isinstance(other, Atom) and self.key == other.key)

    def __hash__(self):
        return self._hash

    def __lt__(self, other):
        return self.key < other.key

    def __repr__(self):
        return self.name

    @property
    def rank(self) -> int:
        return self.key[0]

    # Overridden by subclasses.
    def _partial(self, var: "Symbol") -> "Expr":
        return ZERO

    def partial(self, var: "Symbol") -> "Expr":
        cached = self._dcache.get(var)
        if cached is None:
            cached = self._partial(var)
            self._dcache[var] = cached
        return cached

    @property
    def rules(self) -> tuple:
        return ()

    def inverse(self) -> "Expr | None":
        return None

    def depends_on(self) -> frozenset:
        return frozenset()


class Symbol(Atom):
    """Coordinate, parameter, unknown coefficient or section marker."""

    __slots__ = ("kind", "family", "index", "_laurent")

    def __init__(
        self,
        kind: str,
        family: str,
        index: tuple = (),
        name: str | None = None,
        latex: str | None = None,
        laurent: bool = False,
        extra: str = "",
    ):
        if kind not in RANK or kind in ("derived", "function"):
            raise ValueError(f"bad symbol kind {kind!r}")
        index = tuple(index)
        if name is None:
            name = family if not index else f"{family}[{','.join(map(str, index))}]"
        super().__init__((RANK[kind], family, index, extra), name, latex)
        self.kind = kind
        self.family = family
        self.index = index
        self._laurent = laurent

    @property
    def laurent(self):  # type: ignore[override]
        return self._laurent

    def _partial(self, var):
        return ONE if var == self else ZERO

    def inverse(self):
        if self._laurent:
            return Expr({((self, -1),): 1})
        return None

    def depends_on(self):
        return frozenset((self,))


class DerivedAtom(Atom):
    """Opaque function of coordinates with registered partials and identities.

    Construction is two-phase: create the atom, then call ``freeze`` with the
    derivative table, rewrite rules, inverse and sampler.  After ``freeze`` the
    atom is immutable.
    """

    __slots__ = ("deps", "_partials", "_rules", "_inverse", "sampler", "evaluator", "_frozen")

    def __init__(self, name: str, latex: str, deps: Iterable["Symbol"], tag: str = ""):
        super().__init__((RANK["derived"], name, (), tag), name, latex)
        self.deps = tuple(sorted(set(deps), key=lambda a: a.key))
        self._partials: dict = {}
        self._rules: tuple = ()
        self._inverse = None
        self.sampler = None
        self.evaluator = None
        self._frozen = False

    def freeze(self, partials, rules=(), inverse=None, sampler=None, evaluator=None):
        if self._frozen:
            raise RuntimeError(f"{self.name} already frozen")
        missing = [d for d in self.deps if d not in partials]
        if missing:
            raise ValueError(f"{self.name}: no derivative rule for {missing}")
        self._partials = dict(partials)
        self._rules = tuple(rules)
        self._inverse = inverse
        self.sampler = sampler
        self.evaluator = evaluator
        self._frozen = True

    def _partial(self, var):
        return self._partials.get(var, ZERO)

    @property
    def rules(self):
        return self._rules

    def inverse(self):
        return self._inverse

    def depends_on(self):
        return frozenset(self.deps)


class FuncAtom(Atom):
    """Application of an undefined function (or ``exp``) to expressions.

    ``orders[i]`` counts derivatives taken with respect to argument ``i``.
    """

    __slots__ = ("fname", "index", "args", "orders")

    def __init__(self, fname: str, index: tuple, args: tuple, orders: tuple | None = None,
                 latex: str | None = None):
        args = tuple(args)
        if orders is None:
            orders = (0,) * len(args)
        orders = tuple(orders)
        if len(orders) != len(args):
            raise ValueError("orders must match args")
        if fname == "exp" and (len(args) != 1 or any(orders)):
            raise ValueError("exp takes exactly one argument and carries no derivative orders")
        index = tuple(index)
        head = fname if not index else f"{fname}[{','.join(map(str, index))}]"
        if fname == "exp":
            name = f"exp({args[0].text()})"
        else:
            wrt = []
            for arg, order in zip(args, orders):
                wrt.extend([arg.text()] * order)
            name = head if not wrt else f"diff({head}, {', '.join(wrt)})"
        sig = "|".join(a.text() for a in args) + "#" + ",".join(map(str, orders))
        if latex is None:
            latex = name
        super().__init__((RANK["function"], fname, index, sig), name, latex)
        self.fname = fname
        self.index = index
        self.args = args
        self.orders = orders

    def _partial(self, var):
        if self.fname == "exp":
            return Expr({((self, 1),): 1}) * self.args[0].diff(var)
        total = ZERO
        for i, arg in enumerate(self.args):
            darg = arg.diff(var)
            if darg.is_zero():
                continue
            orders = list(self.orders)
            orders[i] += 1
            total = total + darg * FuncAtom(self.fname, self.index, self.args, tuple(orders)).expr()
        return total

    def inverse(self):
        if self.fname == "exp":
            return FuncAtom("exp", (), (-self.args[0],)).expr()
        return None

    def depends_on(self):
        out = set()
        for arg in self.args:
            out |= arg.depends_on()
        return frozenset(out)

    def with_args(self, args: tuple) -> "FuncAtom":
        return FuncAtom(self.fname, self.index, args, self.orders)

    def expr(self) -> "Expr":
        return Expr({((self, 1),): 1})


def exp(arg: "Expr") -> "Expr":
    arg = as_expr(arg)
    if arg.is_zero():
        return ONE
    return FuncAtom("exp", (), (arg,)).expr()


# ---------------------------------------------------------------------------
# Monomials

Monomial = tuple  # tuple[tuple[Atom, int], ...] sorted by atom key


def _sort_key(item):
    return item[0].key


def mono_mul(m1: Monomial, m2: Monomial) -> Monomial:
    if not m1:
        return m2
    if not m2:
        return m1
    merged = dict(m1)
    for atom, k in m2:
        n = merged.get(atom, 0) + k
        if n:
            merged[atom] = n
        else:
            del merged[atom]
    return tuple(sorted(merged.items(), key=_sort_key))


def mono_divides(divisor: Monomial, mono: Monomial) -> Monomial | None:
    """Quotient ``mono / divisor`` when all exponents allow it, else None."""
    exps = dict(mono)
    for atom, k in divisor:
        have = exps.get(atom, 0)
        if have < k:
            return None
        rest = have - k
        if rest:
            exps[atom] = rest
        else:
            exps.pop(atom, None)
    return tuple(sorted(exps.items(), key=_sort_key))


def mono_degree(mono: Monomial) -> int:
    return sum(k for _, k in mono)


# ---------------------------------------------------------------------------
# Expressions


class Expr:
    """Canonical sparse polynomial.  Treat as immutable."""

    __slots__ = ("terms", "_hash", "_ruled", "_text")

    def __init__(self, terms: Mapping | None = None, *, _normal: bool = False):
        terms = {} if terms is None else terms
        self.terms: dict = dict(terms) if not isinstance(terms, dict) else terms
        self._hash = None
        self._text = None
        self._ruled = None
        if not _normal and self._has_rules():
            self.terms = _rewrite(self.terms)

    # -- construction helpers -------------------------------------------------
    @staticmethod
    def const(value) -> "Expr":
        value = _coeff(value)
        return Expr({(): value}, _normal=True) if value else Expr({}, _normal=True)

    @staticmethod
    def atom(atom: Atom, power: int = 1) -> "Expr":
        if power < 0 and not atom.laurent:
            return Expr.atom(atom, 1).inv() ** (-power)
        if power == 0:
            return ONE
        return Expr({((atom, power),): 1})

    # -- queries ----------------------------------------------------------------
    def _has_rules(self) -> bool:
        if self._ruled is None:
            self._ruled = any(a.rules for mono in self.terms for a, _ in mono)
        return self._ruled

    def is_zero(self) -> bool:
        return not self.terms

    def is_const(self) -> bool:
        return not self.terms or (len(self.terms) == 1 and () in self.terms)

    def const_value(self):
        if not self.is_const():
            raise ValueError(f"{self.text()} is not constant")
        return self.terms.get((), 0)

    def atoms(self) -> frozenset:
        return frozenset(a for mono in self.terms for a, _ in mono)

    def depends_on(self) -> frozenset:
        """Symbols this expression depends on, looking through opaque atoms."""
        out = set()
        for atom in self.atoms():
            out |= atom.depends_on()
        return frozenset(out)

    def degree_in(self, atoms) -> int:
        atoms = set(atoms)
        best = 0
        for mono in self.terms:
            best = max(best, sum(k for a, k in mono if a in atoms))
        return best

    def __len__(self):
        return len(self.terms)

    # -- arithmetic -------------------------------------------------------------
    def __add__(self, other):
        other = as_expr(other)
        if not other.terms:
            return self
        if not self.terms:
            return other
        out = dict(self.terms)
        for mono, c in other.terms.items():
            n = out.get(mono, 0) + c
            if n:
                out[mono] = _coeff(n) if isinstance(n, Fraction) else n
            else:
                del out[mono]
        return Expr(out, _normal=True)

    __radd__ = __add__

    def __neg__(self):
        return Expr({m: -c for m, c in self.terms.items()}, _normal=True)

    def __sub__(self, other):
        return self + (-as_expr(other))

    def __rsub__(self, other):
        return as_expr(other) + (-self)

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)) and not isinstance(other, bool):
            other = _coeff(other)
            if not other:
                return ZERO
            if other == 1:
                return self
            return Expr({m: _coeff(c * other) for m, c in self.terms.items()}, _normal=True)
        other = as_expr(other)
        if not self.terms or not other.terms:
            return ZERO
        if other.is_const():
            return self * other.terms[()]
        if self.is_const():
            return other * self.terms[()]
        out: dict = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                mono = mono_mul(m1, m2)
                n = out.get(mono, 0) + c1 * c2
                if n:
                    out[mono] = n
                else:
                    del out[mono]
        out = {m: _coeff(c) for m, c in out.items()}
        return Expr(out, _normal=not (self._has_rules() or other._has_rules()))

    __rmul__ = __mul__

    def __pow__(self, power: int):
        if not isinstance(power, int):
            raise TypeError("only integer powers are supported")
        if power < 0:
            return self.inv() ** (-power)
        result = ONE
        base = self
        while power:
            if power & 1:
                result = result * base
            power >>= 1
            if power:
                base = base * base
        return result

    def inv(self) -> "Expr":
        """Inverse of a unit: a nonzero constant times invertible atoms."""
        if not self.terms:
            raise DivisionByZero("division by zero expression")
        if len(self.terms) != 1:
            raise NotInvertible(f"cannot divide by non-monomial {self.text()}")
        (mono, c), = self.terms.items()
        result = Expr.const(Fraction(1) / c)
        for atom, k in mono:
            if k < 0:
                result = result * Expr.atom(atom, -k)
                continue
            inverse = atom.inverse()
            if inverse is None:
                raise NotInvertible(f"cannot divide by {atom.name}")
            result = result * (inverse ** k)
        return result

    def __truediv__(self, other):
        if isinstance(other, (int, Fraction)) and not isinstance(other, bool):
            if other == 0:
                raise DivisionByZero("division by zero")
            return self * (Fraction(1) / other)
        return self * as_expr(other).inv()

    def __rtruediv__(self, other):
        return as_expr(other) * self.inv()

    def is_unit(self) -> bool:
        if len(self.terms) != 1:
            return False
        (mono,) = self.terms
        return all(a.inverse() is not None for a, _ in mono)

    # -- equality ----------------------------------------------------------------
    def __eq__(self, other):
        if isinstance(other, (int, Fraction)) and not isinstance(other, bool):
            other = Expr.const(other)
        if not isinstance(other, Expr):
            return NotImplemented
        return self.terms == other.terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self.terms.items()))
        return self._hash

    def __bool__(self):
        return bool(self.terms)

    # -- calculus ----------------------------------------------------------------
    def diff(self, var: Atom) -> "Expr":
        if not isinstance(var, Symbol):
            raise UnknownSymbol(f"cannot differentiate with respect to {var!r}")
        out = ZERO
        acc: dict = {}
        ruled = False
        for mono, c in self.terms.items():
            for i, (atom, k) in enumerate(mono):
                d = atom.partial(var)
                if not d.terms:
                    continue
                rest = mono[:i] + ((atom, k - 1),) + mono[i + 1:] if k != 1 else mono[:i] + mono[i + 1:]
                factor = c * k
                for dm, dc in d.terms.items():
                    m = mono_mul(rest, dm)
                    n = acc.get(m, 0) + factor * dc
                    if n:
                        acc[m] = n
                    else:
                        del acc[m]
                ruled = ruled or d._has_rules() or atom.rules != ()
        if acc:
            out = Expr({m: _coeff(c) for m, c in acc.items()}, _normal=not ruled and not self._has_rules())
        return out

    def subs(self, bindings: Mapping) -> "Expr":
        """Simultaneous substitution of atoms by expressions."""
        if not bindings or not self.terms:
            return self
        bindings = {k: as_expr(v) for k, v in bindings.items()}
        memo: dict = {}

        def image(atom):
            got = memo.get(atom)
            if got is not None:
                return got
            if atom in bindings:
                got = bindings[atom]
            elif isinstance(atom, FuncAtom):
                new_args = tuple(a.subs(bindings) for a in atom.args)
                if new_args == atom.args:
                    got = Expr.atom(atom)
                elif atom.fname == "exp":
                    got = exp(new_args[0])
                else:
                    got = atom.with_args(new_args).expr()
            elif isinstance(atom, DerivedAtom) and any(d in bindings for d in atom.deps):
                moved = [d for d in atom.deps if d in bindings and bindings[d] != Expr.atom(d)]
                if moved:
                    raise KernelError(
                        f"cannot substitute arguments {moved} of opaque quantity {atom.name}")
                got = Expr.atom(atom)
            else:
                got = None
            memo[atom] = got
            return got

        touched = any(image(a) is not None for a in self.atoms())
        if not touched:
            return self
        total: dict = {}
        for mono, c in self.terms.items():
            term = Expr.const(c)
            plain = []
            for atom, k in mono:
                img = image(atom)
                if img is None:
                    plain.append((atom, k))
                else:
                    term = term * (img ** k)
            if plain:
                term = term * Expr({tuple(plain): 1})
            for m, tc in term.terms.items():
                n = total.get(m, 0) + tc
                if n:
                    total[m] = n
                else:
                    del total[m]
        return Expr({m: _coeff(c) for m, c in total.items()})

    # -- evaluation --------------------------------------------------------------
    def evaluate(self, point: Mapping) -> Fraction:
        return evaluate(self, point)

    # -- printing ------------------------------------------------------------------
    def sorted_terms(self):
        return sorted(self.terms.items(), key=lambda mc: _mono_order(mc[0]))

    def text(self) -> str:
        if self._text is None:
            self._text = _render(self, latex=False)
        return self._text

    def latex(self) -> str:
        return _render(self, latex=True)

    def __str__(self):
        return self.text()

    def __repr__(self):
        return f"Expr({self.text()})"


ZERO = Expr({}, _normal=True)
ONE = Expr({(): 1}, _normal=True)


def as_expr(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, Atom):
        return Expr.atom(value)
    if isinstance(value, (int, Fraction)) and not isinstance(value, bool):
        return Expr.const(value)
    raise TypeError(f"cannot convert {type(value).__name__} to Expr")


def const(value) -> Expr:
    return Expr.const(value)


def _rewrite(terms: dict) -> dict:
    limit = max_rewrite_depth()
    for _ in range(limit):
        changed = False
        out: dict = {}
        for mono, c in terms.items():
            hit = None
            for atom, _k in mono:
                for lhs, rhs in atom.rules:
                    quotient = mono_divides(lhs, mono)
                    if quotient is not None:
                        hit = (quotient, rhs)
                        break
                if hit:
                    break
            if hit is None:
                n = out.get(mono, 0) + c
                if n:
                    out[mono] = n
                else:
                    del out[mono]
                continue
            changed = True
            quotient, rhs = hit
            for rm, rc in rhs.terms.items():
                m = mono_mul(quotient, rm)
                n = out.get(m, 0) + c * rc
                if n:
                    out[m] = n
                else:
                    del out[m]
        terms = {m: _coeff(v) for m, v in out.items()}
        if not changed:
            return terms
    raise RewriteDepthExceeded(f"identity rewriting did not reach a fixpoint within {limit} passes")


def normalize(e: Expr) -> Expr:
    """Canonical form.  Expressions are kept normalized, so this re-checks rules."""
    e = as_expr(e)
    if not e._has_rules():
        return e
    return Expr(_rewrite(e.terms), _normal=True)


def partial(e: Expr, var: Atom, chart=None) -> Expr:
    """Exact partial derivative; ``chart`` (if given) must declare ``var``."""
    if chart is not None and not chart.declares(var):
        raise UnknownSymbol(f"{getattr(var, 'name', var)!r} is not declared in chart {chart.space}")
    return as_expr(e).diff(var)


def substitute(e: Expr, bindings: Mapping) -> Expr:
    return as_expr(e).subs(bindings)


# ---------------------------------------------------------------------------
# Evaluation


def _atom_value(atom: Atom, point: Mapping, cache: dict):
    if atom in cache:
        return cache[atom]
    if atom in point:
        value = Fraction(point[atom])
    elif isinstance(atom, DerivedAtom) and atom.evaluator is not None:
        value = atom.evaluator(lambda a: _atom_value(a, point, cache))
    elif isinstance(atom, FuncAtom) and atom.fname == "exp":
        raise UnboundSymbol(f"{atom.name} must be bound explicitly (not rational in general)")
    else:
        raise UnboundSymbol(f"no value for {atom.name}")
    cache[atom] = value
    return value


def evaluate(e: Expr, point: Mapping) -> Fraction:
    """Exact rational value of ``e`` at ``point`` (atom -> rational)."""
    e = as_expr(e)
    cache: dict = {}
    total = Fraction(0)
    for mono, c in e.terms.items():
        term = Fraction(c)
        for atom, k in mono:
            value = _atom_value(atom, point, cache)
            if k < 0:
                if value == 0:
                    raise DivisionByZero(f"{atom.name} is zero at a negative power")
                term /= value ** (-k)
            else:
                term *= value ** k
        total += term
    return total


def evaluate_mod(e: Expr, point: Mapping, prime: int) -> int:
    """Value of ``e`` modulo ``prime``; ``point`` must bind every atom."""
    total = 0
    for mono, c in e.terms.items():
        if isinstance(c, Fraction):
            term = c.numerator * pow(c.denominator, -1, prime)
        else:
            term = c
        term %= prime
        for atom, k in mono:
            try:
                value = point[atom]
            except KeyError:
                raise UnboundSymbol(f"no value for {atom.name}") from None
            if k < 0:
                if value % prime == 0:
                    raise DivisionByZero(f"{atom.name} vanishes mod p")
                term = term * pow(value, k, prime) % prime
            else:
                term = term * pow(value, k, prime) % prime
        total = (total + term) % prime
    return total


# ---------------------------------------------------------------------------
# Linear structure


def linear_split(e: Expr, unknowns) -> tuple[dict, Expr]:
    """Split ``e`` = sum coeff[u]*u + rest, requiring degree <= 1 in ``unknowns``."""
    unknowns = unknowns if isinstance(unknowns, (set, frozenset, dict)) else set(unknowns)
    coeffs: dict = {}
    rest: dict = {}
    for mono, c in e.terms.items():
        hits = [(i, a, k) for i, (a, k) in enumerate(mono) if a in unknowns]
        if not hits:
            rest[mono] = c
            continue
        if len(hits) > 1 or hits[0][2] != 1:
            raise NonlinearError(f"term {Expr({mono: c}).text()} is nonlinear in the unknowns")
        i, atom, _ = hits[0]
        bucket = coeffs.setdefault(atom, {})
        bucket[mono[:i] + mono[i + 1:]] = c
    return ({a: Expr(t, _normal=True) for a, t in coeffs.items()}, Expr(rest, _normal=True))


def collect(e: Expr, variables) -> dict:
    """Coefficients of ``e`` as a polynomial in ``variables`` (keyed by sub-monomial)."""
    variables = set(variables)
    out: dict = {}
    for mono, c in e.terms.items():
        inner = tuple((a, k) for a, k in mono if a in variables)
        outer = tuple((a, k) for a, k in mono if a not in variables)
        out.setdefault(inner, {})[outer] = c
    return {k: Expr(v, _normal=True) for k, v in out.items()}


def unit_part(e: Expr) -> Expr:
    """Largest unit monomial (with the leading coefficient) dividing every term."""
    if not e.terms:
        return ONE
    invertible = {a for mono in e.terms for a, _ in mono if a.inverse() is not None}
    exps = {a: 0 for a in invertible}
    first = True
    for mono in e.terms:
        here = dict(mono)
        for atom in invertible:
            k = here.get(atom, 0)
            exps[atom] = k if first else min(exps[atom], k)
        first = False
    exps = {a: k for a, k in exps.items() if k}
    lead = _mono_order_first(e)
    lead_c = e.terms[lead]
    return Expr({tuple(sorted(exps.items(), key=_sort_key)): 1}, _normal=True) * lead_c


def strip_units(e: Expr) -> Expr:
    """Divide out unit factors and make the leading coefficient 1."""
    if not e.terms:
        return e
    for _ in range(8):
        unit = unit_part(e)
        if unit == ONE:
            return e
        e = e * unit.inv()
    return e


# ---------------------------------------------------------------------------
# Printing


def _mono_order(mono: Monomial):
    return (mono_degree(mono), tuple((a.key, -k) for a, k in mono))


def _mono_order_first(e: Expr) -> Monomial:
    return min(e.terms, key=_mono_order)


def _fmt_coeff(c, latex: bool) -> str:
    c = Fraction(c)
    if c.denominator == 1:
        return str(c.numerator)
    if latex:
        return f"\\frac{{{c.numerator}}}{{{c.denominator}}}"
    return f"{c.numerator}/{c.denominator}"


def _fmt_mono(mono: Monomial, latex: bool) -> str:
    parts = []
    for atom, k in mono:
        base = atom.latex if latex else atom.name
        if k == 1:
            parts.append(base)
        elif latex:
            parts.append(f"{{{base}}}^{{{k}}}")
        else:
            parts.append(f"{base}^{k}" if k > 0 else f"{base}^({k})")
    return (" " if latex else "*").join(parts)


def _render(e: Expr, latex: bool) -> str:
    if not e.terms:
        return "0"
    out = []
    for i, (mono, c) in enumerate(e.sorted_terms()):
        sign = "-" if c < 0 else "+"
        mag = -c if c < 0 else c
        body = _fmt_mono(mono, latex)
        if not body:
            piece = _fmt_coeff(mag, latex)
        elif mag == 1:
            piece = body
        else:
            piece = _fmt_coeff(mag, latex) + (" " if latex else "*") + body
        if i == 0:
            out.append(("-" if sign == "-" else "") + piece)
        else:
            out.append(f" {sign} {piece}")
    return "".join(out)


# ---------------------------------------------------------------------------
# Inverse metric quantities


class MetricQuantities:
    """sqrt(-det g_ab), det g_ab and g_ab for an inverse-metric coordinate family.

    ``upper[(a, b)]`` (a <= b) are the coordinate symbols g^{ab}.  The atoms are
    ``sqrt_neg_det`` (s = sqrt(-g)) and ``det_lower`` (w = det g_ab = 1/det g^ab),
    tied together by the identities s^2 = -w and det(g^ab) * w = 1.
    """

    def __init__(self, upper: Mapping, dim: int, sqrt_name: str, det_name: str,
                 sqrt_latex: str = "\\sqrt{-g}", det_latex: str = "g", tag: str = ""):
        self.dim = dim
        self.upper = dict(upper)
        coords = [self.upper[(a, b)] for a in range(dim) for b in range(a, dim)]
        matrix = [[self.component(a, b) for b in range(dim)] for a in range(dim)]
        self.det_upper = _det(matrix)
        cof = [[_cofactor(matrix, a, b) for b in range(dim)] for a in range(dim)]

        self.det_lower = DerivedAtom(det_name, det_latex, coords, tag)
        self.sqrt_neg_det = DerivedAtom(sqrt_name, sqrt_latex, coords, tag)
        w = Expr.atom(self.det_lower)
        s = Expr.atom(self.sqrt_neg_det)

        # Rule det(g^..) * w -> 1 keyed on the diagonal product (lex-leading term).
        diagonal = Expr.const(1)
        for a in range(dim):
            diagonal = diagonal * self.component(a, a)
        (diag_mono,) = diagonal.terms
        lead_coeff = self.det_upper.terms[diag_mono]
        tail = self.det_upper - Expr({diag_mono: lead_coeff}, _normal=True)
        det_rule_lhs = mono_mul(diag_mono, ((self.det_lower, 1),))
        det_rule_rhs = (ONE - tail * w) * Fraction(1, lead_coeff)
        sqrt_rule = (((self.sqrt_neg_det, 2),), -w)

        det_partials = {}
        sqrt_partials = {}
        for c in coords:
            dD = self.det_upper.diff(c)
            det_partials[c] = -(w * w * dD)
            sqrt_partials[c] = s * w * dD * Fraction(-1, 2)

        prime_det = self.det_upper

        def eval_det(value_of):
            d = evaluate(prime_det, {c: value_of(c) for c in coords})
            if d == 0:
                raise DivisionByZero("degenerate metric")
            return 1 / d

        def eval_sqrt(value_of):
            neg = -value_of(self.det_lower)
            root = _rational_sqrt(neg)
            if root is None:
                raise NotRational("sqrt(-g) is irrational at this point")
            return root

        self.det_lower.freeze(det_partials, rules=((det_rule_lhs, det_rule_rhs),),
                              inverse=self.det_upper, sampler=self._sample, evaluator=eval_det)
        self.sqrt_neg_det.freeze(sqrt_partials, rules=(sqrt_rule,),
                                 inverse=-(s * self.det_upper), sampler=self._sample,
                                 evaluator=eval_sqrt)
        self.lower = {(a, b): cof[a][b] * w for a in range(dim) for b in range(dim)}
        self.coords = coords

    def component(self, a: int, b: int) -> Expr:
        return Expr.atom(self.upper[(min(a, b), max(a, b))])

    def _sample(self, rng, modulus=None) -> dict:
        """Random consistent point: g^.. = L eta L^T with eta = diag(-1, 1, ...)."""
        dim = self.dim
        while True:
            lmat = [[Fraction(rng.randint(-9, 9), rng.randint(1, 4)) for _ in range(dim)]
                    for _ in range(dim)]
            det_l = _det_numeric(lmat)
            if det_l != 0:
                break
        eta = [-1] + [1] * (dim - 1)
        values = {}
        for a in range(dim):
            for b in range(a, dim):
                values[self.upper[(a, b)]] = sum(lmat[a][k] * eta[k] * lmat[b][k] for k in range(dim))
        values[self.det_lower] = Fraction(-1) / (det_l * det_l)
        values[self.sqrt_neg_det] = 1 / abs(det_l)
        if modulus is not None:
            values = {k: _to_mod(v, modulus) for k, v in values.items()}
        return values


def _to_mod(value: Fraction, prime: int) -> int:
    value = Fraction(value)
    return value.numerator * pow(value.denominator, -1, prime) % prime


def _rational_sqrt(value: Fraction) -> Fraction | None:
    from math import isqrt

    value = Fraction(value)
    if value < 0:
        return None
    n, d = value.numerator, value.denominator
    rn, rd = isqrt(n), isqrt(d)
    if rn * rn == n and rd * rd == d:
        return Fraction(rn, rd)
    return None


def _det(matrix) -> Expr:
    size = len(matrix)
    if size == 0:
        return ONE
    if size == 1:
        return matrix[0][0]
    total = ZERO
    for j in range(size):
        if not matrix[0][j]:
            continue
        minor = [row[:j] + row[j + 1:] for row in matrix[1:]]
        term = matrix[0][j] * _det(minor)
        total = total + term if j % 2 == 0 else total - term
    return total


def _cofactor(matrix, a: int, b: int) -> Expr:
    """Entry (a, b) of the adjugate (transpose of the cofactor matrix)."""
    minor = [row[:a] + row[a + 1:] for k, row in enumerate(matrix) if k != b]
    sign = 1 if (a + b) % 2 == 0 else -1
    return _det(minor) * sign


def _det_numeric(matrix) -> Fraction:
    size = len(matrix)
    m = [list(map(Fraction, row)) for row in matrix]
    det = Fraction(1)
    for col in range(size):
        pivot = next((r for r in range(col, size) if m[r][col] != 0), None)
        if pivot is None:
            return Fraction(0)
        if pivot != col:
            m[col], m[pivot] = m[pivot], m[col]
            det = -det
        det *= m[col][col]
        for r in range(col + 1, size):
            f = m[r][col] / m[col][col]
            if f:
                for k in range(col, size):
                    m[r][k] -= f * m[col][k]
    return det


def symbolic_det(matrix) -> Expr:
    """Determinant of a small square matrix of expressions (Laplace expansion)."""
    return _det([[as_expr(x) for x in row] for row in matrix])


def symbolic_adjugate(matrix) -> list:
    matrix = [[as_expr(x) for x in row] for row in matrix]
    size = len(matrix)
    if size == 1:
        return [[ONE]]
    return [[_cofactor(matrix, a, b) for b in range(size)] for a in range(size)]


def sample_value(rng, modulus=None, nonzero=True):
    while True:
        value = Fraction(rng.randint(-30, 30), rng.randint(1, 7))
        if value or not nonzero:
            break
    if modulus is not None:
        return _to_mod(value, modulus)
    return value


def random_point(atoms: Iterable[Atom], rng, modulus=None, fixed: Mapping | None = None) -> dict:
    """Random point binding ``atoms`` consistently (derived atoms via samplers).

    Function atoms (undefined functions and their derivatives, ``exp``) receive
    independent random values: at a single point the jet of an arbitrary
    function is unconstrained.
    """
    point: dict = dict(fixed or {})
    atoms = sorted(set(atoms), key=lambda a: a.key)
    seen_samplers = set()
    for atom in atoms:
        if isinstance(atom, DerivedAtom) and atom not in point and atom.sampler is not None:
            sampler_id = id(atom.sampler.__self__) if hasattr(atom.sampler, "__self__") else id(atom.sampler)
            if sampler_id in seen_samplers:
                continue
            seen_samplers.add(sampler_id)
            for k, v in atom.sampler(rng, modulus).items():
                point.setdefault(k, v)
    for atom in atoms:
        if atom in point:
            continue
        if isinstance(atom, DerivedAtom):
            if modulus is None:
                point[atom] = _atom_value(atom, point, {})
            else:
                raise UnboundSymbol(f"derived atom {atom.name} has no modular sampler")
        else:
            point[atom] = sample_value(rng, modulus)
    return point


def closure_atoms(exprs: Iterable[Expr]) -> set:
    """Atoms of ``exprs`` plus the dependencies of derived atoms."""
    out = set()
    for e in exprs:
        for atom in as_expr(e).atoms():
            out.add(atom)
            if isinstance(atom, DerivedAtom):
                out.update(atom.deps)
    return out


Binding = Callable[[Atom], Fraction]
