from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from multisym.dsl import (
    ArityMismatch,
    DuplicateDeclaration,
    MissingBaseDecl,
    ParseError,
    ResolveError,
    UnknownIdentifier,
    load_theory,
    parse,
    print_spec,
)
from multisym.dsl import (
    AssumeDecl,
    BaseDecl,
    BinOp,
    ComponentItem,
    ConstDecl,
    DensityDecl,
    Diff,
    Exp,
    FieldDecl,
    IndexDecl,
    Momentum,
    Neg,
    Num,
    OptionDecl,
    ParamDecl,
    Power,
    RangeDecl,
    Ref,
    Sum,
    SymmetryDecl,
    TheorySpec,
)
from multisym.reference import FIXTURES, fixture_text

from suites import run_fuzz

GOLDEN = Path(__file__).parent / "golden"

MINIMAL_MESSY = """
theory   scalar{base x[2];field phi;param m;
const eta[base,base]=diag(-1,1);index mu,nu:base;
lagrangian=-1/2*(sum(mu,nu){eta[mu,nu]*phi[;mu]*phi[;nu]}+m^2*phi^2);}
"""


# --- round trips -------------------------------------------------------------------------

@pytest.mark.parametrize("name", FIXTURES)
def test_fixture_round_trip(name):
    text = fixture_text(name)
    spec = parse(text)
    printed = print_spec(spec)
    assert parse(printed) == spec
    assert print_spec(parse(printed)) == printed
    assert load_theory(printed).digest == load_theory(text).digest


def test_minimal_one_field_print_matches_golden():
    printed = print_spec(parse(MINIMAL_MESSY))
    assert printed == (GOLDEN / "minimal_scalar.thy").read_text(encoding="utf-8")


NAMES = st.sampled_from(["a", "b", "phi", "g2", "w_t", "T"])
INDEX = st.one_of(st.integers(0, 3), st.sampled_from(["mu", "nu", "i"]))


def refs():
    plain = NAMES.map(lambda n: Ref(n))
    indexed = st.builds(lambda n, ix, jet: Ref(n, tuple(ix), jet), NAMES, st.lists(INDEX, max_size=3),
                        st.one_of(st.none(), INDEX))
    return st.one_of(plain, indexed)


def expressions():
    leaves = st.one_of(st.integers(0, 50).map(Num), refs(), refs().map(Momentum))
    return st.recursive(leaves, lambda kids: st.one_of(
        st.builds(BinOp, st.sampled_from("+-*/"), kids, kids),
        st.builds(Neg, kids),
        st.builds(Power, kids, st.integers(-3, 4)),
        st.builds(Sum, st.lists(st.sampled_from(["mu", "nu", "i"]), min_size=1, max_size=2, unique=True)
                  .map(tuple), kids),
        st.builds(Diff, kids, refs()),
        st.builds(Exp, kids),
    ), max_leaves=12)


RANGES = st.sampled_from(["base", "r", "lorentz"])
ITEMS = st.one_of(
    st.builds(RangeDecl, NAMES, st.integers(1, 9)),
    st.builds(IndexDecl, st.lists(NAMES, min_size=1, max_size=3).map(tuple), RANGES),
    st.builds(FieldDecl, NAMES, st.lists(st.tuples(st.sampled_from("^_"), RANGES), max_size=3).map(tuple),
              st.lists(st.tuples(st.sampled_from(["sym", "anti"]), st.integers(0, 2), st.integers(0, 2)),
                       max_size=2).map(tuple)),
    st.builds(ParamDecl, NAMES, st.lists(RANGES, max_size=2).map(tuple),
              st.sampled_from([None, "symmetric", "antisymmetric"])),
    st.builds(lambda n, r, v: ConstDecl(n, r, "diag", v), NAMES, st.lists(RANGES, max_size=2).map(tuple),
              st.lists(st.integers(-3, 3), min_size=1, max_size=4).map(tuple)),
    st.builds(lambda n, r: ConstDecl(n, r, "levicivita"), NAMES, st.lists(RANGES, max_size=3).map(tuple)),
    st.builds(lambda n, r, e: ConstDecl(n, r, "expr", (), e), NAMES, st.lists(RANGES, max_size=1).map(tuple),
              expressions()),
    st.builds(AssumeDecl, st.just("nonzero"), NAMES),
    st.builds(OptionDecl, st.just("max_iter"), st.integers(0, 99)),
    st.builds(DensityDecl, st.sampled_from(["lagrangian", "hamiltonian"]), expressions()),
    st.builds(SymmetryDecl, NAMES, st.lists(st.one_of(
        st.just("transport"), st.builds(ComponentItem, refs(), expressions())), max_size=3).map(tuple)),
)

SPECS = st.builds(lambda name, dim, items: TheorySpec(name, (BaseDecl("x", dim),) + tuple(items)),
                  NAMES, st.integers(1, 5), st.lists(ITEMS, max_size=6))


@settings(max_examples=500, deadline=None)
@given(SPECS)
def test_generated_specs_round_trip(spec):
    printed = print_spec(spec)
    reparsed = parse(printed)
    assert reparsed == spec
    assert print_spec(reparsed) == printed


# --- errors ------------------------------------------------------------------------------

def test_missing_base_declaration():
    with pytest.raises(MissingBaseDecl):
        parse("theory T {}")


def test_error_span_points_at_offending_tokens():
    text = "theory T { base x[; }"
    with pytest.raises(ParseError) as info:
        parse(text)
    start, end = info.value.span
    assert text.encode()[start:end] == b"[;"
    assert info.value.line == 1 and info.value.column == text.index("[") + 1
    assert "integer" in info.value.expected


def test_spans_are_byte_offsets():
    text = "# φ field\ntheory T { base x[; }"
    with pytest.raises(ParseError) as info:
        parse(text)
    start, end = info.value.span
    assert text.encode("utf-8")[start:end] == b"[;"
    assert info.value.line == 2


@pytest.mark.parametrize("text, error", [
    ("theory T { base x[2]; base y[2]; }", DuplicateDeclaration),
    ("theory T { base x[2]; field phi; field phi; }", DuplicateDeclaration),
    ("theory T { base x[2]; lagrangian = psi; }", UnknownIdentifier),
    ("theory T { base x[2]; field phi; lagrangian = phi[0]; }", ArityMismatch),
    ("theory T { base x[2]; field phi; lagrangian = phi[;5]; }", ArityMismatch),
    ("theory T { base x[2]; field phi; lagrangian = phi/phi; }", ResolveError),
    ("theory T { base x[0]; }", ResolveError),
    ("theory T { base x[2]; index mu : base; field phi; lagrangian = phi[;mu]; }", UnknownIdentifier),
    ("theory T { base x[2]; field phi; lagrangian = p(phi); }", ResolveError),
    ("theory T { base x[2]; field phi; symmetry s { component phi[;0] = 1; } }", ResolveError),
])
def test_resolution_errors(text, error):
    with pytest.raises(error):
        load_theory(text)


@pytest.mark.parametrize("text", [
    "theory T { base x[2]; } extra",
    "theory T { base x[2] }",
    "theory T { base x[123456789012345678901]; }",
    "theory T { base x[2]; lagrangian = " + "(" * 500 + "1" + ")" * 500 + "; }",
    "theory T { base x[2]; lagrangian = 1 $ 2; }",
    "#thy 2\ntheory T { base x[2]; }",
])
def test_parse_errors(text):
    with pytest.raises(ParseError):
        parse(text)


def test_header_required_on_request():
    with pytest.raises(ParseError):
        parse("theory T { base x[2]; }", require_header=True)
    assert parse("#thy 1\ntheory T { base x[2]; }", require_header=True).name == "T"


def test_invalid_utf8_is_a_parse_error():
    with pytest.raises(ParseError):
        parse(b"theory T { base x[2]; } \xff")


def test_fuzzed_inputs_never_crash_the_front_end():
    stats = run_fuzz(5000, 11, [fixture_text(n) for n in FIXTURES])
    assert stats["inputs"] == 5000 and stats["parsed"] > 0
