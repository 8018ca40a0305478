"""Compile a kernel into per-bit-index decoding plans.

``compile_l`` builds l-expressions (likelihood ratios) with the
simplify / symmetric-transform / extend / fundamental-step loop;
``compile_w`` builds W-expressions (the two bit-channel sums) with the
simplify / fundamental-step loop and memoizes repeated sub-expressions.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from . import expr as E
from . import plan as P
from .gf2 import KernelMatrix, tail_echelon


class CompileFailure(RuntimeError):
    pass


DEFAULT_MAX_SUBSET = 2


def _initial_rows(G: KernelMatrix, i: int):
    """Standard-form variable masks per column plus the tail pivots."""
    Gs, pivots = tail_echelon(G, i)
    var_masks = []
    for k in range(G.m):
        mask = 0
        for j in range(i, G.m):
            if Gs.entry(j, k):
                mask |= 1 << j
        var_masks.append(mask)
    free = ((1 << G.m) - 1) & ~((1 << i) - 1)
    return var_masks, free, pivots


def _leaves(builder: P.PlanBuilder, G: KernelMatrix, upto: int, mode: str) -> tuple[list[int], list[int]]:
    forms = [G.column(k, upto) for k in range(G.m)]
    refs = []
    for k in range(G.m):
        leaf = builder.add(P.LEAF if mode == "L" else P.PAIR_LEAF, leaf=k)
        if forms[k]:
            leaf = builder.add(P.SIGN_EXP if mode == "L" else P.PAIR_SWAP_IF, (leaf,), known_source=k)
        refs.append(leaf)
    return refs, forms


def _check_index(G: KernelMatrix, i: int) -> None:
    if not 1 <= i <= G.m:
        raise IndexError(f"bit index {i} outside 1..{G.m}")


def compile_l(G: KernelMatrix, i: int, max_subset: int = DEFAULT_MAX_SUBSET) -> P.DecodingPlan:
    """l-expression plan for bit ``i`` (1-based)."""
    _check_index(G, i)
    b = P.PlanBuilder()
    refs, forms = _leaves(b, G, i - 1, "L")
    var_masks, free, pivots = _initial_rows(G, i)
    rows = [(refs[k], var_masks[k], 0, G.entry(i - 1, k)) for k in range(G.m)]
    r = E.RatioExpr.build(free, rows)

    def go(r: E.RatioExpr, depth: int) -> tuple[int, int]:
        if depth > 4 * G.m + 8:
            raise CompileFailure(f"no progress compiling index {i}: {r}")
        r = E.simplify(r, b)
        pre = list(r.prefactor)
        r = r.with_rows(r.rows(), prefactor=())
        length = 1
        if E.count_differences(r) == 0:
            core = b.add(P.CONST_ONE)
        else:
            r = E.symmetric_transform(r, max_subset)
            d = E.count_differences(r)
            if d == 0:
                core = b.add(P.CONST_ONE)
            elif d >= 2:
                parts = []
                length = 0
                for sub in E.extend(r):
                    node, sublen = go(sub, depth + 1)
                    b.mark_subexpr(node)
                    parts.append(node)
                    length += sublen
                core = b.mul(parts, "L")
            else:
                try:
                    pivot, tail = E.fundamental_step_l(r)
                except E.ExprError as exc:
                    raise CompileFailure(f"index {i}: {exc}") from exc
                tnode, length = go(tail, depth + 1)
                core = b.diamond(pivot, tnode, "L")
        return b.mul(pre + [core], "L"), length

    root, length = go(r, 0)
    b.mark_subexpr(root)
    plan = P.DecodingPlan(G, i, "L", b.nodes, [(root, None)], forms,
                          length=length, tree_length=length, tail_pivots=pivots)
    return P.dedup_dag(plan)


def compile_w(G: KernelMatrix, i: int) -> P.DecodingPlan:
    """W-expression plan for bit ``i``; both roots share one DAG.

    ``u_i`` is hidden like the known bits: the two roots evaluate the same
    graph with ``u_i = 0`` and ``u_i = 1`` folded into the leaf swaps.
    """
    _check_index(G, i)
    b = P.PlanBuilder()
    refs, forms = _leaves(b, G, i, "W")
    var_masks, free, pivots = _initial_rows(G, i)
    rows = [(refs[k], var_masks[k], 0) for k in range(G.m)]
    e = E._sum_build(free, rows, (), 0)
    e = E._normalize_sum(e.free_vars, rows, (), 0)
    memo: dict[tuple, tuple[int, int, int]] = {}

    def go(e: E.SumProductExpr, depth: int) -> tuple[int, int, int]:
        """Returns ``(node, log2 scale, tree length)``."""
        key = (e.free_vars, e.factors, e.scale_log2)
        if key in memo:
            return memo[key]
        if depth > 4 * G.m + 8:
            raise CompileFailure(f"no progress compiling index {i}")
        s = E.simplify(E.SumProductExpr(e.free_vars, e.factors), b)
        pre = list(s.prefactor)
        scale = e.scale_log2 + s.scale_log2
        if not s.factors:
            node = b.scalar_mul(pre)
            b.mark_subexpr(node)
            out = (node, scale, 1)
        else:
            pivot, (e0, e1) = E.fundamental_step_w(s)
            n0, x0, l0 = go(e0, depth + 1)
            n1, x1, l1 = go(e1, depth + 1)
            if x0 != x1:
                raise CompileFailure(f"index {i}: mismatched branch scales {x0} != {x1}")
            join = b.add(P.PAIR_JOIN, (n0, n1))
            core = b.add(P.SUM_S, (b.add(P.PAIR_MUL, (pivot, join)),))
            out = (b.scalar_mul(pre + [core]), scale + x0, l0 + l1)
        memo[key] = out
        return out

    root, scale, tree_len = go(e, 0)
    plan = P.DecodingPlan(G, i, "W", b.nodes, [(root, 0), (root, 1)], forms,
                          scale_log2=scale, tree_length=tree_len, tail_pivots=pivots)
    return P.dedup_dag(plan)


def compile_kernel(G: KernelMatrix, mode: str = "W", max_subset: int = DEFAULT_MAX_SUBSET,
                   workers: int = 1) -> list[P.DecodingPlan]:
    """All ``m`` plans of a kernel, in index order."""
    if mode == "L":
        fn = lambda i: compile_l(G, i, max_subset)  # noqa: E731
    elif mode == "W":
        fn = lambda i: compile_w(G, i)  # noqa: E731
    else:
        raise ValueError(f"mode must be 'L' or 'W', got {mode!r}")
    idx = range(1, G.m + 1)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(fn, idx))
    return [fn(i) for i in idx]


@dataclass(frozen=True)
class PlanMetrics:
    C: float
    ops: int
    lengths: tuple[int, ...]


def plan_metrics(plans) -> PlanMetrics:
    """Average length ``C`` and evaluation op count over one full kernel."""
    lengths = tuple(p.length for p in plans)
    return PlanMetrics(sum(lengths) / len(lengths), sum(p.op_count() for p in plans), lengths)
