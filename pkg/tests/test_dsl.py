import pytest
from hypothesis import given, strategies as st

from atroforge.dsl import ParseError, parse_program, pretty_print
from atroforge.dsl.ast import (
    ALIVE, Arg, At, BinArith, BoolOp, Compare, Const, Insert, Program, Schema,
    Select, Transaction, Update, WhereAtom, WhereBool, base_label, label_parts,
)
from atroforge.dsl.walk import (
    conjuncts, db_commands, desugar_insert, fields_accessed, pk_equalities,
)

SMALL = """
schema A(a key, b, c);
txn t(p) {
    x := select b from A where a = p;
    update A set c = x.b + 1 where a = p;
    return x.b;
}
"""


def test_courseware_round_trip(courseware):
    text = pretty_print(courseware)
    assert parse_program(text) == courseware
    assert pretty_print(parse_program(text)) == text


def test_courseware_shape(courseware):
    assert [s.name for s in courseware.schemas] == ["STUDENT", "EMAIL", "COURSE"]
    assert courseware.schema("STUDENT").pk == ("st_id",)
    labels = {t.name: [c.label for c in db_commands(t.body)] for t in courseware.transactions}
    assert labels == {"getSt": ["S1", "S2", "S3"], "setSt": ["S4", "U1", "U2"],
                      "regSt": ["U3", "S5", "U4"]}


def test_field_access_sugar():
    t = parse_program(SMALL).txn("t")
    assert t.ret == At(Const(1), "x", "b")
    upd = db_commands(t.body)[1]
    assert upd.sets == (("c", BinArith("+", At(Const(1), "x", "b"), Const(1))),)


def test_default_labels_and_return():
    p = parse_program("schema A(a key, b); txn t() { update A set b = 1 where a = 0; }")
    t = p.txn("t")
    assert db_commands(t.body)[0].label == "c1"
    assert t.ret == Const(0)


def test_general_at_and_aggregates():
    p = parse_program("""
        schema A(a key, b);
        txn t() {
            x := select b from A where b >= 0;
            return at(2, x.b) + sum(x.b) - min(x.b) * max(x.b);
        }""")
    ret = p.txn("t").ret
    assert At(Const(2), "x", "b") in _walk(ret)


def _walk(e):
    yield e
    for k in ("left", "right"):
        if hasattr(e, k):
            yield from _walk(getattr(e, k))


def test_schema_options_round_trip():
    p = parse_program("schema L(k key, i key, v) domain 16 log;")
    s = p.schema("L")
    assert (s.pk, s.key_domain, s.log) == (("k", "i"), 16, True)
    assert parse_program(pretty_print(p)) == p


@pytest.mark.parametrize("src, line, col, needle", [
    ("schema A(a key); schema A(b key);", 1, 18, "duplicate schema"),
    ("schema A(a key, alive);", 1, 1, "implicit"),
    ("schema A(a, b);", 1, 1, "no primary-key"),
    ("schema A(a key); txn t() { update B set x = 1 where a = 1; return 0; }", 1, 28,
     "unresolved schema"),
    ("schema A(a key, b); txn t() { update A set a = 1 where a = 1; return 0; }", 1, 31,
     "cannot be assigned"),
    ("schema A(a key, b); txn t() { return x.b; }", 1, 38, "unresolved variable"),
    ("schema A(a key, b); txn t() { return iter; }", 1, 38, "outside of an iterate"),
    ("schema A(a key, b); txn t() { return uuid(); }", 1, 38, "uuid()"),
    ("schema A(a key, b)\ntxn t() { return 0; }", 2, 1, "expected ';'"),
    ("schema A(a key, b, c); txn t() { x := select b from A where a = 1; return x.c; }",
     1, 75, "no field 'c'"),
    ("schema A(a key, b); txn t() { L: update A set b = 1 where a = 1; "
     "L: update A set b = 2 where a = 1; return 0; }", 1, 69, "duplicate command label"),
    ("schema A(a key, b); txn t() { insert into A values (b = 1); return 0; }", 1, 31,
     "missing primary-key"),
    ("schema A(a key, b); txn t() { return 1 $ 2; }", 1, 40, "unexpected character"),
])
def test_diagnostics(src, line, col, needle):
    with pytest.raises(ParseError) as info:
        parse_program(src)
    d = info.value.diagnostics[0]
    assert (d.line, d.col) == (line, col)
    assert needle in d.message
    assert d.format("f.dbp").startswith(f"f.dbp:{line}:{col}: ")


def test_desugar_insert():
    s = Schema("A", ("a", "b", "c"), ("a",))
    ins = Insert("A", (("a", Arg("p")), ("b", Const(3))), "I")
    upd = desugar_insert(ins, s)
    assert isinstance(upd, Update)
    assert upd.sets == ((ALIVE, Const(True)), ("b", Const(3)))
    assert upd.where == WhereAtom("a", "=", Arg("p"))


def test_pk_equalities():
    w = WhereBool("and", WhereAtom("b", "=", Const(1)), WhereAtom("a", "=", Arg("p")))
    assert pk_equalities(w, ("a", "b")) == {"a": Arg("p"), "b": Const(1)}
    assert pk_equalities(w, ("a",)) is None          # b is not a key field
    assert pk_equalities(WhereAtom("a", "<", Const(1)), ("a",)) is None
    assert conjuncts(WhereBool("or", w, w)) is None


def test_fields_accessed_star(courseware):
    s1 = db_commands(courseware.txn("getSt").body)[0]
    assert fields_accessed(s1, courseware.schema("STUDENT")) == set(
        courseware.schema("STUDENT").fields)


def test_label_helpers():
    assert base_label("U4.2''") == "U4.2"
    assert label_parts("S1+S2'+S3'") == ("S1", "S2", "S3")


# -- printer/parser round trip on generated expressions --------------------

_leaf = st.one_of(
    st.integers(-20, 20).map(Const),
    st.sampled_from(["p", "q"]).map(Arg),
    st.sampled_from(["b", "c"]).map(lambda f: At(Const(1), "x", f)),
)
_arith = st.recursive(
    _leaf,
    lambda kids: st.builds(BinArith, st.sampled_from("+-*/"), kids, kids),
    max_leaves=6)
_cmp = st.builds(Compare, st.sampled_from(["<", "<=", "=", ">", ">="]), _arith, _arith)
_bool = st.recursive(
    st.one_of(_cmp, st.booleans().map(Const)),
    lambda kids: st.builds(BoolOp, st.sampled_from(["and", "or"]), kids, kids),
    max_leaves=4)


def _program_with(ret, cond):
    from atroforge.dsl.ast import If, Seq
    body = Seq((
        Select("x", ("b", "c"), "A", WhereAtom("a", "=", Arg("p")), "S"),
        If(cond, Seq((Update("A", (("c", ret),), WhereAtom("a", "=", Arg("q")), "U"),))),
    ))
    return Program((Schema("A", ("a", "b", "c"), ("a",)),),
                   (Transaction("t", ("p", "q"), body, ret),))


@given(_arith, _bool)
def test_expression_round_trip(ret, cond):
    p = _program_with(ret, cond)
    text = pretty_print(p)
    assert parse_program(text) == p
