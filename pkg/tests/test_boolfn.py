import itertools
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ncsg import boolfn
from ncsg.boolfn import (
    ONE,
    S,
    U,
    ZERO,
    BoolFn,
    IndicatorVector,
    Leaf,
    Node,
    eval_binary,
    eval_kleene,
    eval_ternary,
    eval_tree,
    eval_tree_recursive,
    expand_min2_binary,
    flip_probe,
    from_csg_tree,
    mink_completion,
    mink_interval,
    parse_expr,
    tree_leaves,
)
from ncsg.errors import ArityMismatch, SurfaceBitOutsideFlipSet


def completions(trits):
    free = [i for i, t in enumerate(trits) if t == U]
    for combo in itertools.product((0, 1), repeat=len(free)):
        bits = list(trits)
        for i, c in zip(free, combo):
            bits[i] = c
        yield bits


def brute_ternary(f, trits):
    vals = {eval_tree(f, b) for b in completions(trits)}
    return vals.pop() if len(vals) == 1 else U


def test_binary_examples():
    assert eval_binary(boolfn.union(3), (0, 1, 0)) == 1
    assert eval_binary(boolfn.min_k(2, 3), (1, 0, 1)) == 1
    assert eval_binary(boolfn.min_k(2, 3), (1, 0, 0)) == 0
    assert eval_binary(boolfn.xor(3), (1, 1, 1)) == 1
    with pytest.raises(ArityMismatch):
        eval_binary(boolfn.union(3), (0, 1))


def test_ternary_examples():
    assert eval_ternary(boolfn.intersection(3), (U, ZERO, U)) == ZERO
    assert eval_ternary(boolfn.union(2), (U, ONE)) == ONE
    assert eval_ternary(boolfn.xor(3), (U, ONE, ONE)) == U
    assert eval_ternary(boolfn.min_k(2, 4), (ONE, ONE, U, U)) == ONE
    with pytest.raises(ValueError):
        eval_ternary(boolfn.union(2), (S, ONE))


def test_ternary_binary_cells_are_definite():
    f = parse_expr("(P0 ^ P1) & min2(P1, P2, P3)")
    for bits in itertools.product((0, 1), repeat=4):
        assert eval_ternary(f, bits) in (ZERO, ONE)


def test_xor_with_any_u_is_u():
    f = boolfn.xor(4)
    for bits in itertools.product((0, 1), repeat=3):
        for pos in range(4):
            trits = list(bits)
            trits.insert(pos, U)
            assert eval_ternary(f, trits) == U


def test_flip_probe_examples():
    assert flip_probe(boolfn.difference(2), (S, ZERO), [0]) == (0, 1)
    assert flip_probe(boolfn.intersection(2), (S, S), [0, 1]) == (0, 0, 0, 1)
    assert flip_probe(boolfn.identity(1, 2), (S, S), [0, 1]) == (0, 1, 0, 1)


def test_flip_probe_rejects_stray_surface_bit():
    with pytest.raises(SurfaceBitOutsideFlipSet):
        flip_probe(boolfn.union(3), (S, S, ZERO), [0])


def test_flip_probe_first_slot_most_significant():
    f = boolfn.identity(2, 3)
    assert flip_probe(f, (S, S, S), [2, 0, 1]) == (0, 0, 0, 0, 1, 1, 1, 1)
    assert flip_probe(f, (S, S, S), [0, 1, 2]) == (0, 1, 0, 1, 0, 1, 0, 1)


def test_tree_conversion_exhaustive():
    tree = Node("diff", Leaf(0), Node("union", Leaf(1), Leaf(2)))
    f = from_csg_tree(tree)
    table = [eval_binary(f, bits) for bits in itertools.product((0, 1), repeat=3)]
    # rows in (P0, P1, P2) lexicographic order: only (1, 0, 0) is inside
    assert table == [0, 0, 0, 0, 1, 0, 0, 0]


def test_single_leaf_is_identity():
    f = from_csg_tree(Leaf(0))
    assert [eval_binary(f, (b,)) for b in (0, 1)] == [0, 1]


def test_running_example_operation():
    f = from_csg_tree(Node("inter", Node("xor", Leaf(0), Leaf(1)), Leaf(2)))
    for bits in itertools.product((0, 1), repeat=3):
        assert eval_binary(f, bits) == (bits[0] ^ bits[1]) & bits[2]


def test_parse_expr_examples():
    f = parse_expr("union(P0..P24) - union(P25..P49)")
    assert f.arity == 50
    bits = [0] * 50
    bits[3] = 1
    assert f(bits) == 1
    bits[40] = 1
    assert f(bits) == 0
    assert parse_expr("min2(P0,P1,P2)")((1, 1, 0)) == 1
    with pytest.raises(SyntaxError):
        parse_expr("P0 &")


def test_parse_precedence():
    f = parse_expr("P0 | P1 & P2")
    g = parse_expr("P0 ^ P1 & P2")
    h = parse_expr("P0 - P1 - P2")
    for bits in itertools.product((0, 1), repeat=3):
        a, b, c = bits
        assert f(bits) == a | (b & c)
        assert g(bits) == a ^ (b & c)
        assert h(bits) == a & (1 - b) & (1 - c)


def test_parse_errors_and_arity():
    with pytest.raises(SyntaxError):
        parse_expr("P0 $ P1")
    with pytest.raises(SyntaxError):
        parse_expr("min2(P0")
    with pytest.raises(ArityMismatch):
        parse_expr("P0 | P5", arity=3)
    assert parse_expr("P0 | P1", arity=4).arity == 4


def test_min2_expansion_structure():
    assert expand_min2_binary(2) == Node("inter", Leaf(0), Leaf(1))
    t3 = expand_min2_binary(3)
    assert t3.op == "union" and t3.left.op == "union"
    with pytest.raises(ValueError):
        expand_min2_binary(1)


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_min2_expansion_table(n):
    tree = expand_min2_binary(n)
    assert len(tree_leaves(tree)) == 2 * comb(n, 2)
    f = from_csg_tree(tree)
    assert np.array_equal(f.table, boolfn.min_k(2, n).table)


def test_min2_five_frozen_table():
    # 32-row table of "at least two of five" (popcount >= 2), frozen as a bit mask
    f = from_csg_tree(expand_min2_binary(5))
    mask = sum(int(v) << i for i, v in enumerate(f.table))
    assert mask == 0xFFFEFEE8


def test_mink_paths_agree_exhaustive():
    for n in range(1, 7):
        for k in range(1, n + 1):
            for trits in itertools.product((ZERO, ONE, U), repeat=n):
                assert mink_interval(k, trits) == mink_completion(k, trits)


def test_indicator_vector_packing():
    v = IndicatorVector.parse("01us")
    assert v.slots() == (ZERO, ONE, U, S)
    assert v[2] == U
    assert v.words() == [0b11100100]
    long = IndicatorVector.from_slots([S] * 40)
    assert len(long.words()) == 2
    assert IndicatorVector.from_slots(long.slots()) == long


def test_from_truth_table_empty_is_false():
    f = boolfn.from_truth_table(2, 0)
    assert all(f(b) == 0 for b in itertools.product((0, 1), repeat=2))


def test_invalid_bodies():
    with pytest.raises(ArityMismatch):
        BoolFn(2, boolfn.Var(2))
    with pytest.raises(ArityMismatch):
        BoolFn(0, boolfn.Var(0))


# properties

_leaf = st.integers(0, 4).map(boolfn.Var)


def _grow(children):
    return st.one_of(
        children.map(boolfn.Not),
        st.lists(children, min_size=2, max_size=3).map(lambda a: boolfn.And(tuple(a))),
        st.lists(children, min_size=2, max_size=3).map(lambda a: boolfn.Or(tuple(a))),
        st.lists(children, min_size=2, max_size=3).map(lambda a: boolfn.Xor(tuple(a))),
        st.lists(children, min_size=2, max_size=4).flatmap(
            lambda a: st.integers(1, len(a)).map(lambda k: boolfn.MinK(k, tuple(a)))
        ),
    )


bodies = st.recursive(_leaf, _grow, max_leaves=8)


@settings(max_examples=150, deadline=None)
@given(bodies, st.lists(st.sampled_from((ZERO, ONE, U)), min_size=5, max_size=5))
def test_ternary_is_exact(body, trits):
    f = BoolFn(5, body)
    assert eval_ternary(f, trits) == brute_ternary(f, trits)


@settings(max_examples=150, deadline=None)
@given(bodies, st.lists(st.sampled_from((ZERO, ONE, U)), min_size=5, max_size=5))
def test_kleene_is_sound(body, trits):
    f = BoolFn(5, body)
    k = eval_kleene(f, trits)
    if k != U:
        assert all(eval_tree(f, b) == k for b in completions(trits))


@settings(max_examples=100, deadline=None)
@given(bodies)
def test_table_matches_tree(body):
    f = BoolFn(5, body)
    for idx, bits in enumerate(itertools.product((0, 1), repeat=5)):
        b = bits[::-1]  # index = sum bits[i] << i
        assert int(f.table[idx]) == eval_tree(f, b)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.data())
def test_identity_probe(n, data):
    slot = data.draw(st.integers(0, n - 1))
    base = data.draw(st.lists(st.sampled_from((ZERO, ONE)), min_size=n, max_size=n))
    base[slot] = S
    assert flip_probe(boolfn.identity(slot, n), base, [slot]) == (0, 1)


def _trees(n):
    leaves = st.integers(0, n - 1).map(Leaf)
    return st.recursive(
        leaves,
        lambda c: st.builds(Node, st.sampled_from(boolfn.CSG_OPS), c, c),
        max_leaves=7,
    )


@settings(max_examples=100, deadline=None)
@given(_trees(5))
def test_csg_tree_conversion(tree):
    f = from_csg_tree(tree, arity=5)
    for bits in itertools.product((0, 1), repeat=5):
        assert f(bits) == eval_tree_recursive(tree, bits)


@settings(max_examples=40, deadline=None)
@given(st.integers(18, 24), st.data())
def test_large_arity_kleene_fallback_is_sound(n, data):
    f = boolfn.min_k(3, n)
    assert f.table is None
    trits = data.draw(st.lists(st.sampled_from((ZERO, ONE, U)), min_size=n, max_size=n))
    out = eval_ternary(f, trits)
    ones = sum(1 for t in trits if t == ONE)
    maybe = sum(1 for t in trits if t == U)
    expect = ONE if ones >= 3 else (ZERO if ones + maybe < 3 else U)
    assert out == expect
