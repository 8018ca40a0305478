"""Symbolic sums of products of channel factors over GF(2) variables.

A ``SumProductExpr`` is ``prod(prefactor) * 2**scale_log2 * sum_u prod_k W_k(arg_k(u))``
where ``u`` ranges over the free variables and each ``W_k`` is the pair value
of a plan node.  A ``RatioExpr`` is ``prod(prefactor) * sum(num) / sum(den)``
with index-aligned factor lists; a position where the two arguments differ
by their constant bit is a *difference*.

Variables are bit positions in an integer mask; bit ``j`` stands for
``u_{j+1}``.  Every primitive returns a new expression and appends the nodes
it needs to the shared :class:`~hdpolar.plan.PlanBuilder`.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import plan as P
from .gf2 import parity


class ExprError(ValueError):
    pass


class PreconditionViolated(ExprError):
    pass


class ConstantArgument(ExprError):
    pass


class ZeroDifferences(ExprError):
    pass


class AllConstantArguments(ExprError):
    pass


def _bits(mask: int):
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


@dataclass(frozen=True)
class AffineForm:
    """``constant + sum of the variables in the mask`` over GF(2)."""

    variables: int = 0
    constant: int = 0

    def __add__(self, other: "AffineForm") -> "AffineForm":
        return AffineForm(self.variables ^ other.variables, self.constant ^ other.constant)

    def complement(self) -> "AffineForm":
        return AffineForm(self.variables, self.constant ^ 1)

    def flip(self, bit: int) -> "AffineForm":
        return AffineForm(self.variables, self.constant ^ (bit & 1))

    def contains(self, var: int) -> bool:
        return bool((self.variables >> var) & 1)

    def __call__(self, assignment: int) -> int:
        return parity(self.variables & assignment) ^ self.constant

    def __str__(self) -> str:
        terms = [f"u{j + 1}" for j in _bits(self.variables)]
        body = "+".join(terms) if terms else str(self.constant)
        if terms and self.constant:
            return f"~({body})"
        return body


@dataclass(frozen=True)
class ChannelFactor:
    ref: int
    arg: AffineForm


@dataclass(frozen=True)
class SumProductExpr:
    free_vars: int
    factors: tuple[ChannelFactor, ...]
    prefactor: tuple[int, ...] = ()  # scalar-valued nodes
    scale_log2: int = 0

    def used_vars(self) -> int:
        acc = 0
        for f in self.factors:
            acc |= f.arg.variables
        return acc


@dataclass(frozen=True)
class RatioExpr:
    num: SumProductExpr
    den: SumProductExpr
    prefactor: tuple[int, ...] = ()  # ratio-valued nodes

    def __post_init__(self):
        if self.num.free_vars != self.den.free_vars or len(self.num.factors) != len(self.den.factors):
            raise ExprError("numerator and denominator must share free variables and factor count")
        for a, b in zip(self.num.factors, self.den.factors):
            if a.ref != b.ref or a.arg.variables != b.arg.variables:
                raise ExprError("paired factors must share value_ref and variables")

    @classmethod
    def build(cls, free_vars: int, rows: Sequence[tuple[int, int, int, int]], prefactor=()) -> "RatioExpr":
        """From ``(ref, variables, num_const, den_const)`` tuples."""
        num = tuple(ChannelFactor(r, AffineForm(v, c0)) for r, v, c0, _ in rows)
        den = tuple(ChannelFactor(r, AffineForm(v, c1)) for r, v, _, c1 in rows)
        return cls(SumProductExpr(free_vars, num), SumProductExpr(free_vars, den), tuple(prefactor))

    @property
    def free_vars(self) -> int:
        return self.num.free_vars

    def rows(self) -> list[tuple[int, int, int, int]]:
        return [(a.ref, a.arg.variables, a.arg.constant, b.arg.constant)
                for a, b in zip(self.num.factors, self.den.factors)]

    def used_vars(self) -> int:
        return self.num.used_vars()

    def with_rows(self, rows, free_vars: int | None = None, prefactor=None) -> "RatioExpr":
        return RatioExpr.build(self.free_vars if free_vars is None else free_vars, rows,
                               self.prefactor if prefactor is None else prefactor)


def count_differences(r: RatioExpr) -> int:
    return sum(1 for _, _, c0, c1 in r.rows() if c0 != c1)


def _sum_rows(e: SumProductExpr) -> list[tuple[int, int, int]]:
    return [(f.ref, f.arg.variables, f.arg.constant) for f in e.factors]


def _sum_build(free_vars, rows, prefactor, scale_log2) -> SumProductExpr:
    return SumProductExpr(free_vars, tuple(ChannelFactor(r, AffineForm(v, c)) for r, v, c in rows),
                          tuple(prefactor), scale_log2)


def _normalize_sum(free_vars, rows, prefactor, scale_log2) -> SumProductExpr:
    used = 0
    for _, v, _ in rows:
        used |= v
    dropped = free_vars & ~used
    # each variable that no factor depends on just doubles the sum
    return _sum_build(free_vars & used, rows, prefactor, scale_log2 + bin(dropped).count("1"))


def _normalize_ratio(r: RatioExpr, rows, prefactor=None) -> RatioExpr:
    used = 0
    for _, v, _, _ in rows:
        used |= v
    return r.with_rows(rows, r.free_vars & used, prefactor)


# ---------------------------------------------------------------------------
# the two simplifications


def zero_variable_combine(e, builder: P.PlanBuilder):
    """Merge factors with identical variables into one product factor.

    In a ratio the merged factors must also share their difference status.
    Numerator constants are absorbed into the node (an ``INV``/``PAIR_SWAP``
    wrapper on members whose constant is 1), so the merged argument has
    constant 0 in the numerator.
    """
    if isinstance(e, RatioExpr):
        rows = e.rows()
        groups: dict[tuple[int, int], list[int]] = {}
        for k, (_, v, c0, c1) in enumerate(rows):
            groups.setdefault((v, c0 ^ c1), []).append(k)
        if all(len(g) == 1 for g in groups.values()):
            return e
        out = []
        for k, (ref, v, c0, c1) in enumerate(rows):
            g = groups[(v, c0 ^ c1)]
            if len(g) == 1:
                out.append((ref, v, c0, c1))
            elif k == g[0]:
                node = builder.mul([builder.swap(rows[j][0], rows[j][2], "L") for j in g], "L")
                out.append((node, v, 0, c0 ^ c1))
        return e.with_rows(out)
    rows = _sum_rows(e)
    groups = {}
    for k, (_, v, _) in enumerate(rows):
        groups.setdefault(v, []).append(k)
    if all(len(g) == 1 for g in groups.values()):
        return e
    out = []
    for k, (ref, v, c) in enumerate(rows):
        g = groups[v]
        if len(g) == 1:
            out.append((ref, v, c))
        elif k == g[0]:
            node = builder.mul([builder.swap(rows[j][0], rows[j][2], "W") for j in g], "W")
            out.append((node, v, 0))
    return _sum_build(e.free_vars, out, e.prefactor, e.scale_log2)


def _one_var_match(vars_list: Sequence[int], diffs: Sequence[int] | None = None) -> tuple[int, int, int] | None:
    """First ``(a, b, v)`` with ``vars[b] == {v}`` and ``v`` only shared with ``a``.

    Pairs that :func:`zero_variable_combine` would merge are skipped.
    """
    for b, vb in enumerate(vars_list):
        if vb == 0 or vb & (vb - 1):
            continue
        holders = [k for k, vk in enumerate(vars_list) if vk & vb]
        if len(holders) == 2:
            a = holders[0] if holders[1] == b else holders[1]
            if vars_list[a] != vb or (diffs is not None and diffs[a] != diffs[b]):
                return a, b, vb
    return None


def one_variable_combine(e, builder: P.PlanBuilder):
    """Sum out a variable shared by exactly two factors, one holding it alone.

    ``sum_v W_A(x + v) W_B(v) = (W_A ◇ W_B)(x)``: the pair replaces ``A``
    at ``A``'s position and ``v`` leaves the free variables.  Performs the
    first such merge in factor order; returns ``e`` unchanged if none applies.
    """
    ratio = isinstance(e, RatioExpr)
    mode = "L" if ratio else "W"
    rows = e.rows() if ratio else _sum_rows(e)
    diffs = [row[2] ^ row[3] for row in rows] if ratio else None
    match = _one_var_match([row[1] for row in rows], diffs)
    if match is None:
        return e
    a, b, vb = match
    ra, rb = rows[a], rows[b]
    node = builder.diamond(builder.swap(ra[0], ra[2], mode), builder.swap(rb[0], rb[2], mode), mode)
    out = []
    for k, row in enumerate(rows):
        if k == a:
            if ratio:
                out.append((node, ra[1] ^ vb, 0, (ra[2] ^ ra[3]) ^ (rb[2] ^ rb[3])))
            else:
                out.append((node, ra[1] ^ vb, 0))
        elif k != b:
            out.append(row)
    if ratio:
        return e.with_rows(out, e.free_vars & ~vb)
    return _sum_build(e.free_vars & ~vb, out, e.prefactor, e.scale_log2)


def extract_constants(e, builder: P.PlanBuilder):
    """Move factors without variables out of the sum.

    Ratio: equal constants cancel, a difference becomes ``l`` or ``1/l``.
    Sum: ``W(y|c)`` becomes a ``PARITY_SELECT`` scalar.
    """
    if isinstance(e, RatioExpr):
        rows = e.rows()
        if all(v for _, v, _, _ in rows):
            return e
        pre = list(e.prefactor)
        out = []
        for ref, v, c0, c1 in rows:
            if v:
                out.append((ref, v, c0, c1))
            elif c0 != c1:
                pre.append(builder.swap(ref, c0, "L"))
        return _normalize_ratio(e, out, tuple(pre))
    rows = _sum_rows(e)
    if all(v for _, v, _ in rows):
        return e
    pre = list(e.prefactor)
    out = []
    for ref, v, c in rows:
        if v:
            out.append((ref, v, c))
        else:
            pre.append(builder.add(P.PARITY_SELECT, (ref,), bit=c))
    return _normalize_sum(e.free_vars, out, pre, e.scale_log2)


def marginalize_private(e, builder: P.PlanBuilder):
    """Drop a factor holding a variable that no other factor uses.

    Summing that variable turns the factor into ``S(W)`` whatever the rest
    of its argument is: a scalar prefactor for sums, a common factor that
    cancels for ratios.
    """
    ratio = isinstance(e, RatioExpr)
    while True:
        rows = e.rows() if ratio else _sum_rows(e)
        hit = None
        for k, row in enumerate(rows):
            others = 0
            for j, r2 in enumerate(rows):
                if j != k:
                    others |= r2[1]
            private = row[1] & ~others
            if private:
                hit = (k, private)
                break
        if hit is None:
            return e
        k, private = hit
        out = rows[:k] + rows[k + 1:]
        if ratio:
            e = _normalize_ratio(e, out)
        else:
            pre = e.prefactor + (builder.add(P.SUM_S, (rows[k][0],)),)
            npriv = bin(private).count("1")
            e = _normalize_sum(e.free_vars & ~private, out, pre, e.scale_log2 + npriv - 1)


def simplify(e, builder: P.PlanBuilder):
    """Apply the simplifications until nothing changes."""
    while True:
        before = e
        e = extract_constants(e, builder)
        e = marginalize_private(e, builder)
        e = zero_variable_combine(e, builder)
        e = one_variable_combine(e, builder)
        if e == before:
            return e


# ---------------------------------------------------------------------------
# ratio-only transforms


def flip_subset(r: RatioExpr, subset: int) -> RatioExpr:
    """Substitute ``u -> u + 1`` for the variables in ``subset`` in the denominator."""
    rows = [(ref, v, c0, c1 ^ parity(v & subset)) for ref, v, c0, c1 in r.rows()]
    return r.with_rows(rows)


def symmetric_transform(r: RatioExpr, max_subset: int = 2) -> RatioExpr:
    """Denominator variant with the fewest differences over small flip subsets.

    Ties go to the lexicographically smallest subset (the empty set first).
    """
    if max_subset < 0:
        raise ValueError("max_subset must be >= 0")
    free = list(_bits(r.used_vars()))
    best_key = (count_differences(r), ())
    best = r
    for size in range(1, min(max_subset, len(free)) + 1):
        for combo in itertools.combinations(free, size):
            mask = 0
            for v in combo:
                mask |= 1 << v
            cand = flip_subset(r, mask)
            key = (count_differences(cand), combo)
            if key < best_key:
                best_key, best = key, cand
    return best


def extend(r: RatioExpr) -> list[RatioExpr]:
    """Telescope a ratio with ``d`` differences into ``d`` one-difference ratios.

    Sub-expression ``k`` uses the denominator constants at the first ``k-1``
    difference positions in its numerator and at the first ``k`` in its
    denominator.  The first keeps the prefactor; the rest have none.
    """
    rows = r.rows()
    pos = [k for k, (_, _, c0, c1) in enumerate(rows) if c0 != c1]
    if not pos:
        raise ZeroDifferences("ratio has no difference; it is identically 1")
    out = []
    for k in range(len(pos)):
        flipped_num = set(pos[:k])
        flipped_den = set(pos[: k + 1])
        sub = []
        for j, (ref, v, c0, c1) in enumerate(rows):
            n = c1 if j in flipped_num else c0
            d = c1 if j in flipped_den else c0
            sub.append((ref, v, n, d))
        out.append(r.with_rows(sub, prefactor=r.prefactor if k == 0 else ()))
    return out


def fundamental_step_l(r: RatioExpr) -> tuple[int, RatioExpr]:
    """Peel the single difference: ``r = prod(prefactor) * (l_pivot ◇ tail)``.

    The pivot's lowest variable is eliminated through the constraint on the
    pivot's argument; every factor that held it picks up the pivot's
    variables and becomes a difference in the tail.  The returned tail has
    no prefactor.
    """
    rows = r.rows()
    diffs = [k for k, (_, _, c0, c1) in enumerate(rows) if c0 != c1]
    if len(diffs) != 1:
        raise PreconditionViolated(f"fundamental step needs exactly one difference, got {len(diffs)}")
    p = diffs[0]
    pref, pv, pc0, _ = rows[p]
    if pv == 0:
        raise ConstantArgument("differing factor has no free variable")
    v = pv & -pv
    tail = []
    for k, (ref, vk, c0, c1) in enumerate(rows):
        if k == p:
            continue
        if vk & v:
            n = c0 ^ pc0
            tail.append((ref, vk ^ pv, n, n ^ 1))
        else:
            tail.append((ref, vk, c0, c1))
    out = RatioExpr.build(r.free_vars & ~v, tail)
    return pref, _normalize_ratio(out, tail, ())


def pivot_factor_w(e: SumProductExpr) -> int:
    """Position of the first factor holding the lowest free variable."""
    used = e.used_vars()
    if not used:
        raise AllConstantArguments("no free variable left")
    v = used & -used
    return next(k for k, f in enumerate(e.factors) if f.arg.variables & v)


def fundamental_step_w(e: SumProductExpr) -> tuple[int, tuple[SumProductExpr, SumProductExpr]]:
    """``sum = prod(prefactor) * 2**scale * S(B_pivot . (E0, E1))``.

    ``E_s`` is the rest of the product restricted to ``arg_pivot = s``.
    The returned ``E_s`` carry no prefactor and start from scale 0.
    """
    p = pivot_factor_w(e)
    rows = _sum_rows(e)
    pref, pv, pc = rows[p]
    v = pv & -pv
    tails = []
    for s in (0, 1):
        tail = []
        for k, (ref, vk, c) in enumerate(rows):
            if k == p:
                continue
            if vk & v:
                tail.append((ref, vk ^ pv, c ^ pc ^ s))
            else:
                tail.append((ref, vk, c))
        tails.append(_normalize_sum(e.free_vars & ~v, tail, (), 0))
    return pref, (tails[0], tails[1])


# ---------------------------------------------------------------------------
# brute-force evaluation (test oracle for the primitives)


def node_pairs(builder_or_nodes, leaf_pairs: np.ndarray, known_flips: np.ndarray | None = None) -> list:
    """Exact value of every node for one set of leaf pairs (no normalization).

    Pair nodes give a length-2 array, scalar nodes a float.
    """
    nodes = builder_or_nodes.nodes if hasattr(builder_or_nodes, "nodes") else builder_or_nodes
    leaf_pairs = np.asarray(leaf_pairs, dtype=float)
    vals: list = []
    for n in nodes:
        ch = [vals[c] for c in n.children]
        op = n.op
        if op in (P.LEAF, P.PAIR_LEAF):
            v = leaf_pairs[n.leaf]
        elif op in (P.SIGN_EXP, P.PAIR_SWAP_IF):
            f = 0 if known_flips is None else known_flips[n.known_source]
            v = ch[0][::-1] if f else ch[0]
        elif op in (P.INV, P.PAIR_SWAP):
            v = ch[0][::-1]
        elif op in (P.MUL, P.PAIR_MUL, P.SCALAR_MUL):
            v = ch[0]
            for c in ch[1:]:
                v = v * c
        elif op in (P.DIAMOND, P.PAIR_DIAMOND):
            a, b = ch
            v = np.array([a[0] * b[0] + a[1] * b[1], a[0] * b[1] + a[1] * b[0]])
        elif op == P.CONST_ONE:
            v = np.ones(2)
        elif op == P.SCALAR_ONE:
            v = 1.0
        elif op == P.SUM_S:
            v = ch[0][0] + ch[0][1]
        elif op == P.PARITY_SELECT:
            v = ch[0][n.bit]
        elif op == P.PAIR_JOIN:
            v = np.array([ch[0], ch[1]])
        else:
            raise ExprError(op)
        vals.append(v)
    return vals


def _brute_sum(free_vars: int, factors, vals) -> float:
    vs = list(_bits(free_vars))
    total = 0.0
    for bits in itertools.product((0, 1), repeat=len(vs)):
        u = 0
        for b, j in zip(bits, vs):
            u |= b << j
        term = 1.0
        for f in factors:
            term *= vals[f.ref][f.arg(u)]
        total += term
    return total


def brute_value(e, vals) -> float:
    """Exhaustive value of an expression given node values from :func:`node_pairs`."""
    if isinstance(e, RatioExpr):
        pre = 1.0
        for ref in e.prefactor:
            pre *= vals[ref][0] / vals[ref][1]
        return pre * _brute_sum(e.free_vars, e.num.factors, vals) / _brute_sum(e.free_vars, e.den.factors, vals)
    pre = 2.0**e.scale_log2
    for ref in e.prefactor:
        pre *= vals[ref]
    return pre * _brute_sum(e.free_vars, e.factors, vals)


# ---------------------------------------------------------------------------
# pretty printing


def render(nodes: Sequence[P.PlanNode], root: int) -> str:
    """Render a subgraph with ◇ binding tighter than juxtaposed products."""

    def go(k: int, ctx: str) -> str:
        n = nodes[k]
        op = n.op
        if op in (P.LEAF, P.PAIR_LEAF):
            return f"l{n.leaf + 1}" if op == P.LEAF else f"B{n.leaf + 1}"
        if op == P.SIGN_EXP:
            return go(n.children[0], "atom") + f"^(1-2a{n.known_source + 1})"
        if op == P.PAIR_SWAP_IF:
            return go(n.children[0], "atom") + f"^(a{n.known_source + 1})"
        if op in (P.INV, P.PAIR_SWAP):
            return go(n.children[0], "atom") + "^-1"
        if op == P.CONST_ONE:
            return "1"
        if op == P.SCALAR_ONE:
            return "1"
        if op in (P.MUL, P.PAIR_MUL, P.SCALAR_MUL):
            sep = " " if op == P.MUL else "·"
            if op == P.MUL and any(nodes[c].subexpr for c in n.children):
                sep = " ⊠ "
            body = sep.join(go(c, "mul") for c in n.children)
            return f"({body})" if ctx in ("atom", "dia") else body
        if op in (P.DIAMOND, P.PAIR_DIAMOND):
            body = f"{go(n.children[0], 'dia')} ◇ {go(n.children[1], 'dia')}"
            return f"({body})" if ctx == "atom" else body
        if op == P.SUM_S:
            return f"S({go(n.children[0], 'top')})"
        if op == P.PARITY_SELECT:
            return f"{go(n.children[0], 'atom')}[{n.bit}]"
        if op == P.PAIR_JOIN:
            return f"<{go(n.children[0], 'top')}, {go(n.children[1], 'top')}>"
        raise ExprError(op)

    return go(root, "top")
