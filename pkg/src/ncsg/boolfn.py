"""N-ary boolean functions over binary, ternary and surface-augmented inputs."""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ArityMismatch, ExprSyntaxError, SurfaceBitOutsideFlipSet

ZERO, ONE, U, S = 0, 1, 2, 3
TABLE_MAX_ARITY = 16
MAX_ARITY = 256
_SLOT_CHARS = {ZERO: "0", ONE: "1", U: "u", S: "s"}


# expression nodes


@dataclass(frozen=True)
class Var:
    index: int


@dataclass(frozen=True)
class Not:
    arg: object


@dataclass(frozen=True)
class And:
    args: tuple


@dataclass(frozen=True)
class Or:
    args: tuple


@dataclass(frozen=True)
class Xor:
    args: tuple


@dataclass(frozen=True)
class MinK:
    k: int
    args: tuple


def _max_index(node):
    if isinstance(node, Var):
        return node.index
    if isinstance(node, Not):
        return _max_index(node.arg)
    return max((_max_index(a) for a in node.args), default=-1)


def _check(node, arity):
    if isinstance(node, Var):
        if not 0 <= node.index < arity:
            raise ArityMismatch(f"input {node.index} out of range for arity {arity}")
    elif isinstance(node, Not):
        _check(node.arg, arity)
    else:
        if isinstance(node, MinK) and not 1 <= node.k <= max(len(node.args), 1):
            raise ValueError(f"min-k with k={node.k} over {len(node.args)} operands")
        for a in node.args:
            _check(a, arity)


def _eval_bits(node, bits):
    """Works on ints or on numpy integer arrays (vectorized truth tables)."""
    if isinstance(node, Var):
        return bits[node.index]
    if isinstance(node, Not):
        return 1 - _eval_bits(node.arg, bits)
    vals = [_eval_bits(a, bits) for a in node.args]
    if isinstance(node, And):
        out = 1
        for v in vals:
            out = out & v
        return out
    if isinstance(node, Or):
        out = 0
        for v in vals:
            out = out | v
        return out
    if isinstance(node, Xor):
        out = 0
        for v in vals:
            out = out ^ v
        return out
    total = 0
    for v in vals:
        total = total + v
    if isinstance(total, np.ndarray):
        return (total >= node.k).astype(np.int64)
    return int(total >= node.k)


def mink_interval(k, trits):
    """Ternary min-k from bounds on the count of ones."""
    ones = sum(1 for t in trits if t == ONE)
    maybe = sum(1 for t in trits if t == U)
    if ones >= k:
        return ONE
    if ones + maybe < k:
        return ZERO
    return U


def mink_completion(k, trits):
    """Ternary min-k by enumerating every completion of the u operands."""
    free = [i for i, t in enumerate(trits) if t == U]
    seen = set()
    for combo in itertools.product((0, 1), repeat=len(free)):
        vals = list(trits)
        for i, c in zip(free, combo):
            vals[i] = c
        seen.add(int(sum(vals) >= k))
        if len(seen) == 2:
            return U
    return seen.pop()


def _kleene(node, trits):
    if isinstance(node, Var):
        return trits[node.index]
    if isinstance(node, Not):
        t = _kleene(node.arg, trits)
        return t if t == U else 1 - t
    vals = [_kleene(a, trits) for a in node.args]
    if isinstance(node, And):
        if ZERO in vals:
            return ZERO
        return U if U in vals else ONE
    if isinstance(node, Or):
        if ONE in vals:
            return ONE
        return U if U in vals else ZERO
    if isinstance(node, Xor):
        if U in vals:
            return U
        return sum(vals) & 1
    return mink_interval(node.k, vals)


class BoolFn:
    """Immutable N-input boolean function with an expression body.

    For arity <= 16 a truth table (index = sum bits[i] << i) is compiled on
    first use and backs exact ternary evaluation. Above that, ternary
    evaluation uses per-operator Kleene rules, which never return a wrong
    definite value but may return u where every completion agrees.
    """

    def __init__(self, arity, body):
        if arity < 1 or arity > MAX_ARITY:
            raise ArityMismatch(f"arity {arity} outside [1, {MAX_ARITY}]")
        _check(body, arity)
        self.arity = arity
        self.body = body
        self._table = None
        self._ternary_cache = {}

    def __repr__(self):
        return f"BoolFn(arity={self.arity}, body={self.body!r})"

    @property
    def table(self):
        if self._table is None and self.arity <= TABLE_MAX_ARITY:
            idx = np.arange(1 << self.arity, dtype=np.int64)
            bits = [(idx >> i) & 1 for i in range(self.arity)]
            vals = _eval_bits(self.body, bits)
            table = np.broadcast_to(np.asarray(vals, dtype=np.uint8), idx.shape).copy()
            table.setflags(write=False)
            self._table = table
        return self._table

    def _check_len(self, values):
        if len(values) != self.arity:
            raise ArityMismatch(f"expected {self.arity} inputs, got {len(values)}")

    def __call__(self, bits):
        return eval_binary(self, bits)


def eval_tree(f, bits):
    """Binary evaluation by walking the expression (bypasses the table)."""
    f._check_len(bits)
    return int(_eval_bits(f.body, list(bits)))


def eval_binary(f: BoolFn, bits: Sequence[int]) -> int:
    f._check_len(bits)
    for b in bits:
        if b not in (0, 1):
            raise ValueError(f"non-binary input {b!r}")
    table = f.table
    if table is not None:
        idx = 0
        for i, b in enumerate(bits):
            idx |= b << i
        return int(table[idx])
    return int(_eval_bits(f.body, list(bits)))


def _subset_offsets(positions):
    k = len(positions)
    a = np.arange(1 << k, dtype=np.int64)
    out = np.zeros_like(a)
    for j, p in enumerate(positions):
        out |= ((a >> j) & 1) << p
    return out


def eval_ternary(f: BoolFn, trits: Sequence[int]) -> int:
    f._check_len(trits)
    ones = 0
    umask = 0
    for i, t in enumerate(trits):
        if t == ONE:
            ones |= 1 << i
        elif t == U:
            umask |= 1 << i
        elif t != ZERO:
            raise ValueError(f"slot {i} is not a trit: {t!r}")
    key = (ones, umask)
    hit = f._ternary_cache.get(key)
    if hit is not None:
        return hit
    table = f.table
    if table is None:
        out = _kleene(f.body, list(trits))
    elif umask == 0:
        out = int(table[ones])
    else:
        positions = [i for i in range(f.arity) if umask >> i & 1]
        vals = table[ones | _subset_offsets(positions)]
        out = ONE if vals.all() else (ZERO if not vals.any() else U)
    if len(f._ternary_cache) < 1 << 16:
        f._ternary_cache[key] = out
    return out


def eval_kleene(f: BoolFn, trits: Sequence[int]) -> int:
    """Per-operator Kleene evaluation, always sound."""
    f._check_len(trits)
    return _kleene(f.body, list(trits))


def flip_probe(f: BoolFn, base: Sequence[int], flip_set: Sequence[int]) -> tuple:
    """f at every binary assignment of the flipped slots, first slot most significant."""
    f._check_len(base)
    flips = list(flip_set)
    if not 1 <= len(flips) <= 3 or len(set(flips)) != len(flips):
        raise ValueError(f"flip set must hold 1 to 3 distinct slots, got {flips}")
    fixed = 0
    for i, t in enumerate(base):
        if i in flips:
            continue
        if t == S:
            raise SurfaceBitOutsideFlipSet(f"slot {i} is s but not flipped")
        if t == ONE:
            fixed |= 1 << i
        elif t != ZERO:
            raise ValueError(f"slot {i} must be binary, got {_SLOT_CHARS.get(t, t)}")
    k = len(flips)
    table = f.table
    out = []
    for a in range(1 << k):
        idx = fixed
        for j, slot in enumerate(flips):
            if a >> (k - 1 - j) & 1:
                idx |= 1 << slot
        if table is not None:
            out.append(int(table[idx]))
        else:
            out.append(int(_eval_bits(f.body, [idx >> i & 1 for i in range(f.arity)])))
    return tuple(out)


class IndicatorVector:
    """N slots in {0, 1, u, s}, packed 2 bits per slot, 32 slots per 64-bit word."""

    __slots__ = ("n", "packed")

    def __init__(self, n, packed=0):
        self.n = n
        self.packed = packed

    @classmethod
    def from_slots(cls, slots):
        packed = 0
        for i, v in enumerate(slots):
            if v not in (ZERO, ONE, U, S):
                raise ValueError(f"bad slot value {v!r}")
            packed |= v << (2 * i)
        return cls(len(slots), packed)

    @classmethod
    def parse(cls, text):
        codes = {"0": ZERO, "1": ONE, "u": U, "s": S}
        return cls.from_slots([codes[c] for c in text])

    def slots(self):
        return tuple((self.packed >> (2 * i)) & 3 for i in range(self.n))

    def words(self):
        count = max(1, (self.n + 31) // 32)
        mask = (1 << 64) - 1
        return [(self.packed >> (64 * w)) & mask for w in range(count)]

    def __getitem__(self, i):
        if not 0 <= i < self.n:
            raise IndexError(i)
        return (self.packed >> (2 * i)) & 3

    def __eq__(self, other):
        return isinstance(other, IndicatorVector) and (self.n, self.packed) == (other.n, other.packed)

    def __hash__(self):
        return hash((self.n, self.packed))

    def __repr__(self):
        return "IndicatorVector(" + "".join(_SLOT_CHARS[v] for v in self.slots()) + ")"


# binary CSG trees


@dataclass(frozen=True)
class Leaf:
    index: int


@dataclass(frozen=True)
class Node:
    op: str  # one of union, inter, diff, xor
    left: object
    right: object


CSG_OPS = ("union", "inter", "diff", "xor")


def tree_leaves(tree):
    if isinstance(tree, Leaf):
        return [tree.index]
    return tree_leaves(tree.left) + tree_leaves(tree.right)


def tree_to_body(tree):
    if isinstance(tree, Leaf):
        return Var(tree.index)
    a, b = tree_to_body(tree.left), tree_to_body(tree.right)
    if tree.op == "union":
        return Or((a, b))
    if tree.op == "inter":
        return And((a, b))
    if tree.op == "diff":
        return And((a, Not(b)))
    if tree.op == "xor":
        return Xor((a, b))
    raise ValueError(f"unknown CSG operator {tree.op!r}")


def eval_tree_recursive(tree, bits):
    if isinstance(tree, Leaf):
        return bits[tree.index]
    a = eval_tree_recursive(tree.left, bits)
    b = eval_tree_recursive(tree.right, bits)
    return {"union": a | b, "inter": a & b, "diff": a & (1 - b), "xor": a ^ b}[tree.op]


def from_csg_tree(tree, arity=None):
    n = max(tree_leaves(tree)) + 1
    return BoolFn(arity or n, tree_to_body(tree))


def _chain(op, items):
    out = items[0]
    for it in items[1:]:
        out = Node(op, out, it)
    return out


def expand_min2_binary(n):
    """Union of the C(n, 2) pairwise intersections, left-deep."""
    if n < 2:
        raise ValueError("min-2 expansion needs n >= 2")
    pairs = [Node("inter", Leaf(a), Leaf(b)) for a, b in itertools.combinations(range(n), 2)]
    return _chain("union", pairs)


def body_to_csg_tree(node):
    """Binary CSG tree for bodies built from union/inter/diff/xor/min-k."""
    if isinstance(node, Var):
        return Leaf(node.index)
    if isinstance(node, Or):
        return _chain("union", [body_to_csg_tree(a) for a in node.args])
    if isinstance(node, Xor):
        return _chain("xor", [body_to_csg_tree(a) for a in node.args])
    if isinstance(node, And):
        pos = [a for a in node.args if not isinstance(a, Not)]
        neg = [a.arg for a in node.args if isinstance(a, Not)]
        if not pos:
            raise ValueError("complement without a bounded operand is not a CSG tree")
        out = _chain("inter", [body_to_csg_tree(a) for a in pos])
        for a in neg:
            out = Node("diff", out, body_to_csg_tree(a))
        return out
    if isinstance(node, MinK):
        groups = [
            _chain("inter", [body_to_csg_tree(node.args[i]) for i in combo])
            for combo in itertools.combinations(range(len(node.args)), node.k)
        ]
        return _chain("union", groups)
    raise ValueError(f"cannot express {node!r} as a binary CSG tree")


# named constructors


def union(n):
    return BoolFn(n, Or(tuple(Var(i) for i in range(n))))


def intersection(n):
    return BoolFn(n, And(tuple(Var(i) for i in range(n))))


def difference(n=2):
    """P0 minus the union of the others."""
    rest = tuple(Not(Var(i)) for i in range(1, n))
    return BoolFn(n, And((Var(0),) + rest))


def xor(n):
    return BoolFn(n, Xor(tuple(Var(i) for i in range(n))))


def min_k(k, n):
    return BoolFn(n, MinK(k, tuple(Var(i) for i in range(n))))


def identity(slot, n):
    return BoolFn(n, Var(slot))


def from_truth_table(n, table):
    """Function whose value at index sum bits[i] << i is bit ``index`` of ``table``."""
    terms = []
    for idx in range(1 << n):
        if table >> idx & 1:
            lits = tuple(Var(i) if idx >> i & 1 else Not(Var(i)) for i in range(n))
            terms.append(And(lits))
    return BoolFn(n, Or(tuple(terms)))


# expression language

_TOKEN = re.compile(
    r"\s*(?:(?P<input>P(?P<idx>\d+))|(?P<func>min(?P<k>\d+)|union|inter|xor)"
    r"|(?P<range>\.\.)|(?P<op>[|&\-^~!(),]))"
)


def _tokenize(text):
    pos = 0
    toks = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m:
            start = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ExprSyntaxError(f"unexpected character {text[start]!r}", start)
        start = m.start(m.lastgroup)
        if m.group("input"):
            idx = int(m.group("idx"))
            if idx >= MAX_ARITY:
                raise ExprSyntaxError(f"input index {idx} overflows the {MAX_ARITY}-slot limit", start)
            toks.append(("input", idx, start))
        elif m.group("func"):
            name = m.group("func")
            toks.append(("func", (name, int(m.group("k"))) if m.group("k") else (name, None), start))
        elif m.group("range"):
            toks.append(("range", None, start))
        else:
            toks.append(("op", m.group("op"), start))
        pos = m.end()
    toks.append(("end", None, len(text)))
    return toks


class _Parser:
    def __init__(self, text):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect_op(self, op):
        kind, val, pos = self.take()
        if kind != "op" or val != op:
            raise ExprSyntaxError(f"expected {op!r}", pos)

    def expr(self):
        node = self.xor_level()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val == "|":
                self.take()
                node = _flat(Or, node, self.xor_level())
            elif kind == "op" and val == "-":
                self.take()
                node = And((node, Not(self.xor_level())))
            else:
                return node

    def xor_level(self):
        node = self.and_level()
        while self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            node = _flat(Xor, node, self.and_level())
        return node

    def and_level(self):
        node = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] == "&":
            self.take()
            node = _flat(And, node, self.unary())
        return node

    def unary(self):
        kind, val, _ = self.peek()
        if kind == "op" and val in "~!":
            self.take()
            return Not(self.unary())
        return self.primary()

    def primary(self):
        kind, val, pos = self.take()
        if kind == "input":
            if self.peek()[0] == "range":
                raise ExprSyntaxError("range only allowed as a function argument", self.peek()[2])
            return Var(val)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        if kind == "func":
            name, k = val
            self.expect_op("(")
            args = self.args()
            self.expect_op(")")
            if name == "union":
                return Or(tuple(args))
            if name == "inter":
                return And(tuple(args))
            if name == "xor":
                return Xor(tuple(args))
            if not 1 <= k <= len(args):
                raise ExprSyntaxError(f"min{k} over {len(args)} operands", pos)
            return MinK(k, tuple(args))
        what = "end of input" if kind == "end" else repr(val)
        raise ExprSyntaxError(f"unexpected {what}", pos)

    def args(self):
        out = []
        while True:
            kind, val, pos = self.peek()
            if kind == "input" and self.toks[self.i + 1][0] == "range":
                self.take()
                self.take()
                kind2, hi, pos2 = self.take()
                if kind2 != "input":
                    raise ExprSyntaxError("range needs an input on both sides", pos2)
                if hi < val:
                    raise ExprSyntaxError("empty range", pos)
                out.extend(Var(i) for i in range(val, hi + 1))
            else:
                out.append(self.expr())
            if self.peek()[0] == "op" and self.peek()[1] == ",":
                self.take()
                continue
            return out


def _flat(cls, a, b):
    left = a.args if isinstance(a, cls) else (a,)
    return cls(left + (b,))


def parse_body(text):
    p = _Parser(text)
    node = p.expr()
    kind, _, pos = p.peek()
    if kind != "end":
        raise ExprSyntaxError("trailing input", pos)
    return node


def parse_expr(text, arity=None):
    body = parse_body(text)
    n = _max_index(body) + 1
    if n < 1:
        raise ExprSyntaxError("expression references no input", 0)
    if arity is not None and arity < n:
        raise ArityMismatch(f"expression needs {n} inputs, {arity} given")
    return BoolFn(arity or n, body)
