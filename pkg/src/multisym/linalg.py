"""Linear systems whose coefficients are symbolic expressions.

Rows are linear in a set of unknown symbols.  Elimination divides only by
units of the coefficient ring (nonzero constants, nonzero parameters, and
opaque quantities with registered inverses).  Ranks are generic ranks,
computed modulo a large prime at random points of the coordinate space.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .symkernel import (
    ONE,
    ZERO,
    Expr,
    NonlinearError,
    Symbol,
    closure_atoms,
    collect,
    evaluate_mod,
    linear_split,
    random_point,
    strip_units,
    symbolic_adjugate,
    symbolic_det,
)

PRIME = 2_147_483_647
MAX_SYMBOLIC_BLOCK = 6


class InconsistentSystem(Exception):
    """A constraint reduced to a nonvanishing quantity."""

    def __init__(self, message: str, residual: Expr | None = None):
        super().__init__(message)
        self.residual = residual


@dataclass
class Row:
    """Equation sum(coeffs[u] * u) + rhs = 0."""

    label: str
    family: str
    coeffs: dict
    rhs: Expr

    def expr(self) -> Expr:
        total = self.rhs
        for u, c in self.coeffs.items():
            total = total + c * Expr.atom(u)
        return total

    def has_unknowns(self) -> bool:
        return bool(self.coeffs)


def make_row(e: Expr, unknowns, label: str, family: str) -> Row:
    coeffs, rest = linear_split(e, unknowns)
    return Row(label, family, coeffs, rest)


@dataclass
class SolveResult:
    bindings: dict = field(default_factory=dict)  # unknown -> Expr in free unknowns
    equations: list = field(default_factory=list)  # rows still containing unknowns
    candidates: list = field(default_factory=list)  # unknown-free rows (nonzero rhs)
    assumptions: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# Modular numerics


def modular_points(exprs: Iterable[Expr], seed: int, count: int = 2) -> list[dict]:
    atoms = closure_atoms(exprs)
    rng = random.Random(seed)
    points = []
    for _ in range(count):
        for _attempt in range(20):
            try:
                points.append(random_point(atoms, rng, modulus=PRIME))
                break
            except ZeroDivisionError:
                continue
    return points


def numeric_matrix(rows: Sequence[Row], cols: Sequence[Symbol], point: dict) -> np.ndarray:
    col_index = {u: j for j, u in enumerate(cols)}
    mat = np.zeros((len(rows), len(cols)), dtype=np.int64)
    for i, row in enumerate(rows):
        for u, c in row.coeffs.items():
            j = col_index.get(u)
            if j is not None:
                mat[i, j] = evaluate_mod(c, point, PRIME)
    return mat


def echelon(mat: np.ndarray) -> tuple[list[int], list[int], list[int]]:
    """Incremental row reduction mod PRIME.

    Returns (independent rows, their pivot columns, dependent rows), rows in
    input order.  A[independent, pivots] is nonsingular.
    """
    basis: list[np.ndarray] = []
    pivots: list[int] = []
    independent: list[int] = []
    dependent: list[int] = []
    for i in range(mat.shape[0]):
        row = mat[i].copy() % PRIME
        for b, pcol in zip(basis, pivots):
            f = int(row[pcol])
            if f:
                row = (row - f * b) % PRIME
        nz = np.nonzero(row)[0]
        if len(nz) == 0:
            dependent.append(i)
            continue
        pcol = int(nz[0])
        inv = pow(int(row[pcol]), -1, PRIME)
        row = (row * inv) % PRIME
        basis.append(row)
        pivots.append(pcol)
        independent.append(i)
    return independent, pivots, dependent


def generic_rank(rows: Sequence[Row], cols: Sequence[Symbol], seed: int = 0) -> int:
    exprs = [c for r in rows for c in r.coeffs.values()]
    best = 0
    for point in modular_points(exprs, seed):
        best = max(best, len(echelon(numeric_matrix(rows, cols, point))[0]))
    return best


def _best_echelon(rows, cols, seed):
    exprs = [c for r in rows for c in r.coeffs.values()]
    best = None
    for point in modular_points(exprs, seed):
        result = echelon(numeric_matrix(rows, cols, point))
        if best is None or len(result[0]) > len(best[0]):
            best = result
    return best


def components(rows: Sequence[Row]) -> list[list[int]]:
    """Connected components of the row/unknown incidence graph (row indices)."""
    parent = list(range(len(rows)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    owner: dict = {}
    for i, row in enumerate(rows):
        for u in row.coeffs:
            if u in owner:
                a, b = find(i), find(owner[u])
                if a != b:
                    parent[max(a, b)] = min(a, b)
            else:
                owner[u] = i
    groups: dict = {}
    for i in range(len(rows)):
        groups.setdefault(find(i), []).append(i)
    return [groups[k] for k in sorted(groups)]


def _blocks(pairs_rows: list[int], pair_cols: list[Symbol], rows: Sequence[Row]) -> list[tuple[list, list]]:
    """Split the square pivot matrix into independent diagonal blocks."""
    n = len(pairs_rows)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    col_pos = {u: k for k, u in enumerate(pair_cols)}
    for k, ri in enumerate(pairs_rows):
        for u in rows[ri].coeffs:
            j = col_pos.get(u)
            if j is not None:
                a, b = find(k), find(j)
                if a != b:
                    parent[max(a, b)] = min(a, b)
    groups: dict = {}
    for k in range(n):
        groups.setdefault(find(k), []).append(k)
    return [([pairs_rows[k] for k in g], [pair_cols[k] for k in g]) for _, g in sorted(groups.items())]


def _scc_blocks(pairs_rows: list[int], pair_cols: list[Symbol], rows: Sequence[Row]) -> list[tuple[list, list]]:
    """Strongly connected blocks of the pivot matrix, smallest first.

    Row k points to row j when it has an entry in the pivot column of j.  Each
    block is square and nonsingular on its own; coupling to other blocks only
    moves terms to the right-hand side.
    """
    n = len(pairs_rows)
    col_pos = {u: k for k, u in enumerate(pair_cols)}
    edges = [[col_pos[u] for u in rows[ri].coeffs if u in col_pos] for ri in pairs_rows]
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list = []
    groups: list = []
    counter = 0
    for root in range(n):
        if index[root] >= 0:
            continue
        work = [(root, 0)]
        while work:
            v, pos = work.pop()
            if pos == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack[v] = True
            recurse = False
            for k in range(pos, len(edges[v])):
                w = edges[v][k]
                if index[w] < 0:
                    work.append((v, k + 1))
                    work.append((w, 0))
                    recurse = True
                    break
                if on_stack[w]:
                    low[v] = min(low[v], index[w])
            if recurse:
                continue
            if low[v] == index[v]:
                group = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    group.append(w)
                    if w == v:
                        break
                groups.append(sorted(group))
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
    groups.sort(key=lambda g: (len(g), g))
    return [([pairs_rows[k] for k in g], [pair_cols[k] for k in g]) for g in groups]


def _sparse_first(rows: Sequence[Row]) -> list[Row]:
    return sorted(rows, key=lambda r: len(r.coeffs))


# ---------------------------------------------------------------------------
# Substitution helpers


def _substitute_row(row: Row, u: Symbol, coeffs: dict, const: Expr) -> Row:
    a = row.coeffs.get(u)
    if a is None:
        return row
    new = {v: c for v, c in row.coeffs.items() if v != u}
    for v, b in coeffs.items():
        val = new.get(v, ZERO) + a * b
        if val.is_zero():
            new.pop(v, None)
        else:
            new[v] = val
    return Row(row.label, row.family, new, row.rhs + a * const)


def _substitute_binding(bexpr: tuple, u: Symbol, coeffs: dict, const: Expr) -> tuple:
    bcoeffs, bconst = bexpr
    a = bcoeffs.get(u)
    if a is None:
        return bexpr
    new = {v: c for v, c in bcoeffs.items() if v != u}
    for v, b in coeffs.items():
        val = new.get(v, ZERO) + a * b
        if val.is_zero():
            new.pop(v, None)
        else:
            new[v] = val
    return (new, bconst + a * const)


class _State:
    def __init__(self, rows):
        self.rows = list(rows)
        self.bindings: dict = {}  # u -> (coeffs, const)
        self.order: list = []

    def bind(self, u: Symbol, coeffs: dict, const: Expr):
        self.rows = [_substitute_row(r, u, coeffs, const) for r in self.rows]
        for v in list(self.bindings):
            self.bindings[v] = _substitute_binding(self.bindings[v], u, coeffs, const)
        self.bindings[u] = (coeffs, const)
        self.order.append(u)


def _unit_pivot(state: _State) -> bool:
    best = None
    for i, row in enumerate(state.rows):
        for u, c in row.coeffs.items():
            if c.is_unit():
                score = (0 if c.is_const() else 1, len(row.coeffs), i, u.key)
                if best is None or score < best[0]:
                    best = (score, i, u)
    if best is None:
        return False
    _, i, u = best
    row = state.rows.pop(i)
    inv = row.coeffs[u].inv()
    coeffs = {v: -(c * inv) for v, c in row.coeffs.items() if v != u}
    state.bind(u, coeffs, -(row.rhs * inv))
    return True


def _apply_block(state: _State, block_rows: list[Row], bcols: list[Symbol]) -> bool:
    """Solve ``block_rows`` for ``bcols`` if their determinant is a unit."""
    mat = [[row.coeffs.get(u, ZERO) for u in bcols] for row in block_rows]
    det = symbolic_det(mat)
    if det.is_zero() or not det.is_unit():
        return False
    adj = symbolic_adjugate(mat)
    inv_det = det.inv()
    # u_Q = -(adj/det) (rhs_P + A[P, others] u_others)
    solutions = []
    for qi, u in enumerate(bcols):
        coeffs = {}
        const = ZERO
        for pk, prow in enumerate(block_rows):
            factor = adj[qi][pk] * inv_det
            if factor.is_zero():
                continue
            const = const - factor * prow.rhs
            for v, c in prow.coeffs.items():
                if v in bcols:
                    continue
                val = coeffs.get(v, ZERO) - factor * c
                if val.is_zero():
                    coeffs.pop(v, None)
                else:
                    coeffs[v] = val
        solutions.append((u, coeffs, const))
    ids = {id(r) for r in block_rows}
    state.rows = [r for r in state.rows if id(r) not in ids]
    for u, coeffs, const in solutions:
        state.bind(u, coeffs, const)
    return True


MAX_SUBSET_TRIALS = 64


def _support_block(state: _State) -> bool:
    """Square blocks among rows sharing one small unknown support."""
    groups: dict = {}
    for row in state.rows:
        if 1 < len(row.coeffs) <= MAX_SYMBOLIC_BLOCK:
            key = frozenset(row.coeffs)
            groups.setdefault(key, []).append(row)
    for key in sorted(groups, key=lambda k: (len(k), sorted(u.key for u in k))):
        rows = groups[key]
        size = len(key)
        if len(rows) < size:
            continue
        bcols = sorted(key, key=lambda s: s.key)
        for trial, subset in enumerate(combinations(rows, size)):
            if trial >= MAX_SUBSET_TRIALS:
                break
            if _apply_block(state, list(subset), bcols):
                return True
    return False


def _block_solve(state: _State, seed: int) -> bool:
    """Solve one square block with a unit determinant, if any exists."""
    if _support_block(state):
        return True
    live = [r for r in state.rows if r.coeffs]
    if not live:
        return False
    for comp in components(live):
        comp_rows = _sparse_first([live[i] for i in comp])
        cols = sorted({u for r in comp_rows for u in r.coeffs}, key=lambda s: s.key)
        independent, pivots, _ = _best_echelon(comp_rows, cols, seed)
        pivot_cols = [cols[j] for j in pivots]
        for brows, bcols in _scc_blocks(independent, pivot_cols, comp_rows):
            if len(brows) > MAX_SYMBOLIC_BLOCK:
                continue
            if _apply_block(state, [comp_rows[r] for r in brows], bcols):
                return True
    return False


def solve_linear(rows: Sequence[Row], seed: int = 0, symbolic_blocks: bool = True) -> SolveResult:
    """Eliminate unknowns; classify the rest into equations and candidates."""
    state = _State(r for r in rows if r.coeffs or not r.rhs.is_zero())
    progress = True
    while progress:
        progress = _unit_pivot(state)
        if not progress and symbolic_blocks:
            progress = _block_solve(state, seed)

    result = SolveResult()
    for u in state.order:
        coeffs, const = state.bindings[u]
        total = const
        for v, c in coeffs.items():
            total = total + c * Expr.atom(v)
        result.bindings[u] = total

    live = [r for r in state.rows if r.coeffs]
    result.candidates = [r for r in state.rows if not r.coeffs and not r.rhs.is_zero()]
    if not live:
        return result

    dependent_rows: set = set()
    for comp in components(live):
        comp_rows = _sparse_first([live[i] for i in comp])
        cols = sorted({u for r in comp_rows for u in r.coeffs}, key=lambda s: s.key)
        independent, pivots, dependent = _best_echelon(comp_rows, cols, seed)
        if not dependent:
            continue
        pivot_cols = [cols[j] for j in pivots]
        blocks = _blocks(independent, pivot_cols, comp_rows)
        for di in dependent:
            row = comp_rows[di]
            touching = [(br, bc) for br, bc in blocks if any(u in row.coeffs for u in bc)]
            if any(len(br) > MAX_SYMBOLIC_BLOCK for br, _ in touching):
                result.assumptions.append(
                    f"row '{row.label}' is generically dependent but its elimination block is too large")
                continue
            dets, numerators = [], []
            for br, bc in touching:
                mat = [[comp_rows[r].coeffs.get(u, ZERO) for u in bc] for r in br]
                det = symbolic_det(mat)
                adj = symbolic_adjugate(mat)
                combo = ZERO
                for pk, r in enumerate(br):
                    weight = ZERO
                    for qi, u in enumerate(bc):
                        a = row.coeffs.get(u)
                        if a is not None:
                            weight = weight + a * adj[qi][pk]
                    combo = combo + weight * comp_rows[r].rhs
                dets.append(det)
                numerators.append(combo)
            product_all = ONE
            for det in dets:
                product_all = product_all * det
            total = row.rhs * product_all
            for k, num in enumerate(numerators):
                others = ONE
                for j, det in enumerate(dets):
                    if j != k:
                        others = others * det
                total = total - num * others
            for det in dets:
                if not det.is_unit():
                    result.assumptions.append(f"pivot determinant {det.text()} is nonzero")
            dependent_rows.add(id(row))
            if not total.is_zero():
                result.candidates.append(Row(row.label, row.family, {}, total))
    result.equations = [r for r in live if id(r) not in dependent_rows]
    return result


# ---------------------------------------------------------------------------
# Reduction of constraints


def top_layer(exprs: Iterable[Expr]) -> set:
    """Jet and momentum coordinates occurring in ``exprs``."""
    out = set()
    for e in exprs:
        for a in e.depends_on():
            if isinstance(a, Symbol) and a.kind in ("jet", "momentum", "pscalar"):
                out.add(a)
    return out


class ConstraintBasis:
    """Constraints kept independent by linear reduction over the coefficient field.

    A constraint c is represented by its coefficients as a polynomial in the
    top-layer variables V (jets or momenta occurring in the recorded
    constraints); coefficients live in the field K of functions of the other
    coordinates.  A candidate is redundant when it is a K-linear combination of
    recorded constraints.  When some recorded constraint does not involve V the
    test degrades to comparison up to unit factors.
    """

    def __init__(self, seed: int = 0):
        self.members: list[Expr] = []
        self.seed = seed

    def _variables(self) -> set:
        return top_layer(self.members)

    def contains(self, candidate: Expr) -> bool:
        candidate = strip_units(candidate)
        if candidate.is_zero():
            return True
        if any(strip_units(c) == candidate for c in self.members):
            return True
        if not self.members:
            return False
        variables = self._variables()
        if not variables or any(not (top_layer([c]) & variables) for c in self.members):
            return False
        vectors = [collect(c, variables) for c in self.members] + [collect(candidate, variables)]
        keys = sorted({k for v in vectors for k in v}, key=lambda m: tuple((a.key, e) for a, e in m))
        exprs = [x for v in vectors for x in v.values()]
        for point in modular_points(exprs, self.seed):
            mat = np.zeros((len(vectors), len(keys)), dtype=np.int64)
            for i, vec in enumerate(vectors):
                for j, k in enumerate(keys):
                    if k in vec:
                        mat[i, j] = evaluate_mod(vec[k], point, PRIME)
            base_rank = len(echelon(mat[:-1])[0])
            full_rank = len(echelon(mat)[0])
            if full_rank > base_rank:
                return False
        return True

    def add(self, candidate: Expr) -> Expr | None:
        """Record ``candidate`` if independent; return its reduced form or None."""
        reduced = strip_units(candidate)
        if reduced.is_zero():
            return None
        if reduced.is_unit():
            raise InconsistentSystem(f"constraint reduces to the nonvanishing {reduced.text()}", reduced)
        if self.contains(reduced):
            return None
        self.members.append(reduced)
        return reduced


def in_span(residual: Expr, constraints: Sequence[Expr], seed: int = 0) -> bool:
    """Whether ``residual`` vanishes on {constraints = 0} by linear reduction."""
    if residual.is_zero():
        return True
    basis = ConstraintBasis(seed)
    basis.members = [strip_units(c) for c in constraints if not c.is_zero()]
    return basis.contains(residual)


__all__ = [
    "PRIME",
    "Row",
    "SolveResult",
    "ConstraintBasis",
    "InconsistentSystem",
    "NonlinearError",
    "make_row",
    "solve_linear",
    "generic_rank",
    "echelon",
    "in_span",
    "nullspace",
    "top_layer",
]


def _adjugate_nullspace(rows: list[Row], cols: list[Symbol], seed: int) -> tuple[list[dict], list[str]]:
    if not rows:
        return [{c: ONE} for c in cols], []
    independent, pivots, _ = _best_echelon(rows, cols, seed)
    pivot_cols = [cols[j] for j in pivots]
    free = [c for c in cols if c not in set(pivot_cols)]
    blocks = _blocks(independent, pivot_cols, rows)
    assumptions: list[str] = []
    solved_blocks = []
    for br, bc in blocks:
        if len(br) > MAX_SYMBOLIC_BLOCK:
            raise NotImplementedError(f"kernel block of size {len(br)} exceeds the symbolic limit")
        mat = [[rows[r].coeffs.get(u, ZERO) for u in bc] for r in br]
        det = symbolic_det(mat)
        if not det.is_unit():
            assumptions.append(f"pivot determinant {det.text()} is nonzero")
        solved_blocks.append((br, bc, det, symbolic_adjugate(mat)))
    basis = []
    for f in free:
        touching = [blk for blk in solved_blocks if any(f in rows[r].coeffs for r in blk[0])]
        scale = ONE
        for blk in touching:
            scale = scale * blk[2]
        vec = {f: scale}
        for br, bc, det, adj in touching:
            others = ONE
            for blk in touching:
                if blk[0] is not br:
                    others = others * blk[2]
            for qi, u in enumerate(bc):
                val = ZERO
                for pk, r in enumerate(br):
                    a = rows[r].coeffs.get(f)
                    if a is not None:
                        val = val - adj[qi][pk] * a
                val = val * others
                if not val.is_zero():
                    vec[u] = val
        if scale.is_unit():
            unit = scale.inv()
            vec = {k: v * unit for k, v in vec.items()}
        basis.append(vec)
    return basis, assumptions


def nullspace(rows: Sequence[Row], cols: Sequence[Symbol], seed: int = 0) -> tuple[list[dict], list[str]]:
    """Basis of the generic kernel of the row system (rhs ignored).

    Unit pivots and unit-determinant blocks are eliminated exactly first; the
    remainder uses adjugates scaled through by their determinants, whose
    nonvanishing is returned alongside the basis.
    """
    live_rows = [r for r in rows if r.coeffs]
    if live_rows and generic_rank(live_rows, list(cols), seed) == len(cols):
        return [], ["generic rank is full; kernel vectors can exist only on a degeneracy locus"]
    state = _State(Row(r.label, r.family, r.coeffs, ZERO) for r in live_rows)
    progress = True
    while progress:
        progress = _unit_pivot(state) or _block_solve(state, seed)
    bound = set(state.bindings)
    rest = [c for c in cols if c not in bound]
    live = [r for r in state.rows if r.coeffs]
    partial, assumptions = _adjugate_nullspace(live, rest, seed)
    basis = []
    for vec in partial:
        full = {c: v for c, v in vec.items() if not v.is_zero()}
        for u in state.order:
            coeffs, _ = state.bindings[u]
            val = ZERO
            for v, c in coeffs.items():
                if v in vec:
                    val = val + c * vec[v]
            if not val.is_zero():
                full[u] = val
        basis.append(full)
    return basis, assumptions
