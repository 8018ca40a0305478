"""Decoding plans: DAGs of pair/ratio operations compiled per bit index.

Every node evaluates to either a *pair* ``(p0, p1)`` (a channel value
``W(.|0), W(.|1)`` up to scale) or a *scalar*.  L-mode plans are evaluated in
homogeneous pair coordinates as well: the likelihood ratio ``l`` is carried
as ``(l, 1)`` so that ``l = inf`` is just ``(1, 0)``; the ratio is formed only
at the root.  All operations are multilinear in their children, which makes
per-node rescaling safe.

Node table conventions: a node's children always have smaller ids, so the
table is topologically ordered.  Leaf and column references are 0-based in
memory and 1-based in the JSON file format.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .gf2 import KernelMatrix

FORMAT_VERSION = 1

# l-mode ops
LEAF = "LEAF"
SIGN_EXP = "SIGN_EXP"
INV = "INV"
MUL = "MUL"
DIAMOND = "DIAMOND"
CONST_ONE = "CONST_ONE"
# pair-mode ops
PAIR_LEAF = "PAIR_LEAF"
PAIR_SWAP = "PAIR_SWAP"
PAIR_SWAP_IF = "PAIR_SWAP_IF"
PAIR_MUL = "PAIR_MUL"
PAIR_DIAMOND = "PAIR_DIAMOND"
PAIR_JOIN = "PAIR_JOIN"
SUM_S = "SUM_S"
PARITY_SELECT = "PARITY_SELECT"

SCALAR_MUL = "SCALAR_MUL"
SCALAR_ONE = "SCALAR_ONE"

L_OPS = {LEAF, SIGN_EXP, INV, MUL, DIAMOND, CONST_ONE}
W_OPS = {PAIR_LEAF, PAIR_SWAP, PAIR_SWAP_IF, PAIR_MUL, PAIR_DIAMOND, PAIR_JOIN,
         SUM_S, PARITY_SELECT, SCALAR_MUL, SCALAR_ONE}
ALL_OPS = L_OPS | W_OPS
_ARITY = {LEAF: 0, PAIR_LEAF: 0, CONST_ONE: 0, SCALAR_ONE: 0,
          SIGN_EXP: 1, INV: 1, PAIR_SWAP: 1, PAIR_SWAP_IF: 1, SUM_S: 1, PARITY_SELECT: 1,
          DIAMOND: 2, PAIR_DIAMOND: 2, PAIR_JOIN: 2}


class PlanError(ValueError):
    pass


class IndeterminateLLR(ArithmeticError):
    pass


@dataclass(frozen=True)
class PlanNode:
    op: str
    children: tuple[int, ...] = ()
    leaf: int | None = None  # column for LEAF / PAIR_LEAF
    known_source: int | None = None  # column whose known form drives SIGN_EXP / PAIR_SWAP_IF
    bit: int | None = None  # PARITY_SELECT component
    subexpr: bool = False  # marks a sub-expression root (length accounting)

    def key(self) -> tuple:
        return (self.op, self.children, self.leaf, self.known_source, self.bit)

    @property
    def is_scalar(self) -> bool:
        return self.op in (SUM_S, PARITY_SELECT, SCALAR_MUL, SCALAR_ONE)


class PlanBuilder:
    """Append-only node table shared by all sub-expressions of one compilation."""

    def __init__(self):
        self.nodes: list[PlanNode] = []

    def add(self, op: str, children: Sequence[int] = (), **kw) -> int:
        children = tuple(children)
        if any(c >= len(self.nodes) or c < 0 for c in children):
            raise PlanError(f"{op}: child reference out of range")
        self.nodes.append(PlanNode(op, children, **kw))
        return len(self.nodes) - 1

    def __getitem__(self, idx: int) -> PlanNode:
        return self.nodes[idx]

    def mark_subexpr(self, idx: int) -> None:
        self.nodes[idx] = replace(self.nodes[idx], subexpr=True)

    # Small peepholes keep emitted plans readable; none changes a value.
    def swap(self, ref: int, flag: int, mode: str) -> int:
        if not flag:
            return ref
        node = self.nodes[ref]
        if node.op in (INV, PAIR_SWAP):
            return node.children[0]
        return self.add(INV if mode == "L" else PAIR_SWAP, (ref,))

    def mul(self, refs: Sequence[int], mode: str) -> int:
        refs = [r for r in refs if self.nodes[r].op != CONST_ONE]
        if not refs:
            if mode != "L":
                raise PlanError("empty pair product")
            return self.add(CONST_ONE)
        if len(refs) == 1:
            return refs[0]
        return self.add(MUL if mode == "L" else PAIR_MUL, refs)

    def scalar_mul(self, refs: Sequence[int]) -> int:
        refs = [r for r in refs if self.nodes[r].op != SCALAR_ONE]
        if not refs:
            return self.add(SCALAR_ONE)
        if len(refs) == 1:
            return refs[0]
        return self.add(SCALAR_MUL, refs)

    def diamond(self, left: int, right: int, mode: str) -> int:
        if mode == "L" and CONST_ONE in (self.nodes[left].op, self.nodes[right].op):
            # l ◇ 1 = 1
            return self.add(CONST_ONE)
        return self.add(DIAMOND if mode == "L" else PAIR_DIAMOND, (left, right))


@dataclass
class DecodingPlan:
    """Executable form of one l-expression (mode ``L``) or W-expression (``W``).

    ``known_forms[j]`` is the GF(2) form of the offset of column ``j`` as a
    bitmask over the known bits ``u_1..u_{i-1}`` (L-mode) or
    ``u_1..u_i`` (W-mode, where ``u_i`` selects the root).
    ``roots`` lists ``(node, u_i)``; L-mode has one root with ``u_i=None``.
    ``scale_log2`` is the power of two dropped by normalization (W-mode):
    the exact bit-channel sum is ``value * 2**scale_log2``.
    """

    kernel: KernelMatrix
    index: int  # 1-based
    mode: str
    nodes: list[PlanNode]
    roots: list[tuple[int, int | None]]
    known_forms: list[int]
    scale_log2: int = 0
    length: int = 1
    tree_length: int = 1
    tail_pivots: list[int] = field(default_factory=list)

    def __post_init__(self):
        validate_plan(self)

    @property
    def m(self) -> int:
        return self.kernel.m

    def op_count(self) -> int:
        """Non-leaf nodes visited by one evaluation (both W roots share a visit)."""
        return sum(1 for n in self.nodes if n.op not in (LEAF, PAIR_LEAF))

    def subexpr_count(self) -> int:
        return sum(1 for n in self.nodes if n.subexpr)

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "mode": self.mode,
            "nodes": [_node_to_dict(k, n) for k, n in enumerate(self.nodes)],
            "roots": [{"node": r, "u_i": b} for r, b in self.roots],
            "known_forms": [format(f, "x") for f in self.known_forms],
            "scale_log2": self.scale_log2,
            "tail_pivots": [p + 1 for p in self.tail_pivots],
            "metrics": {"length": self.length, "tree_length": self.tree_length,
                        "ops": self.op_count()},
        }

    @classmethod
    def from_dict(cls, d: dict, kernel: KernelMatrix) -> "DecodingPlan":
        nodes = [_node_from_dict(k, nd) for k, nd in enumerate(d["nodes"])]
        return cls(
            kernel=kernel,
            index=int(d["index"]),
            mode=d["mode"],
            nodes=nodes,
            roots=[(int(r["node"]), r["u_i"]) for r in d["roots"]],
            known_forms=[int(f, 16) for f in d["known_forms"]],
            scale_log2=int(d.get("scale_log2", 0)),
            length=int(d["metrics"]["length"]),
            tree_length=int(d["metrics"].get("tree_length", d["metrics"]["length"])),
            tail_pivots=[p - 1 for p in d.get("tail_pivots", [])],
        )


def _node_to_dict(k: int, n: PlanNode) -> dict:
    d = {"id": k, "op": n.op, "children": list(n.children),
         "leaf": None if n.leaf is None else n.leaf + 1,
         "known_source": None if n.known_source is None else n.known_source + 1}
    if n.bit is not None:
        d["bit"] = n.bit
    if n.subexpr:
        d["subexpr"] = True
    return d


def _node_from_dict(k: int, d: dict) -> PlanNode:
    if int(d["id"]) != k:
        raise PlanError(f"node ids must be consecutive; expected {k}, got {d['id']}")
    leaf = d.get("leaf")
    src = d.get("known_source")
    return PlanNode(d["op"], tuple(int(c) for c in d["children"]),
                    leaf=None if leaf is None else int(leaf) - 1,
                    known_source=None if src is None else int(src) - 1,
                    bit=d.get("bit"), subexpr=bool(d.get("subexpr", False)))


def validate_plan(plan: DecodingPlan) -> None:
    """Check DAG ordering, arities, leaf ranges and mode discipline."""
    m = plan.kernel.m
    if plan.mode not in ("L", "W"):
        raise PlanError(f"unknown mode {plan.mode!r}")
    if len(plan.known_forms) != m:
        raise PlanError("known_forms must have one entry per column")
    for k, n in enumerate(plan.nodes):
        if n.op not in ALL_OPS:
            raise PlanError(f"node {k}: unknown op {n.op}")
        if any(c >= k for c in n.children):
            raise PlanError(f"node {k}: children must precede their parent (cycle or bad order)")
        arity = _ARITY.get(n.op)
        if arity is not None and len(n.children) != arity:
            raise PlanError(f"node {k}: {n.op} takes {arity} children")
        if n.op in (MUL, PAIR_MUL, SCALAR_MUL) and not n.children:
            raise PlanError(f"node {k}: {n.op} needs children")
        if n.op in (LEAF, PAIR_LEAF) and not (n.leaf is not None and 0 <= n.leaf < m):
            raise PlanError(f"node {k}: leaf index outside 1..{m}")
        if n.op in (SIGN_EXP, PAIR_SWAP_IF) and not (n.known_source is not None and 0 <= n.known_source < m):
            raise PlanError(f"node {k}: known_source outside 1..{m}")
        if n.op == PARITY_SELECT and n.bit not in (0, 1):
            raise PlanError(f"node {k}: PARITY_SELECT needs bit 0 or 1")
        if n.op not in (L_OPS if plan.mode == "L" else W_OPS):
            raise PlanError(f"node {k}: op {n.op} not allowed in {plan.mode}-mode plan")
        for c in n.children:
            child_scalar = plan.nodes[c].is_scalar
            wants_scalar = n.op in (SCALAR_MUL, PAIR_JOIN)
            if child_scalar != wants_scalar:
                raise PlanError(f"node {k}: {n.op} got a {'scalar' if child_scalar else 'pair'} child")
    for r, _ in plan.roots:
        if not 0 <= r < len(plan.nodes):
            raise PlanError("root out of range")
        if plan.mode == "W" and not plan.nodes[r].is_scalar:
            raise PlanError("W-mode roots must be scalar")
        if plan.mode == "L" and plan.nodes[r].is_scalar:
            raise PlanError("L-mode root must be ratio-valued")


def dedup_dag(plan: DecodingPlan) -> DecodingPlan:
    """Merge structurally identical nodes and drop unreachable ones.

    Canonical key: op, ordered (already merged) child ids, leaf, known source
    and parity bit.  Node order stays topological, evaluation is unchanged.
    """
    live = set()
    stack = [r for r, _ in plan.roots]
    while stack:
        k = stack.pop()
        if k in live:
            continue
        live.add(k)
        stack.extend(plan.nodes[k].children)
    remap: dict[int, int] = {}
    seen: dict[tuple, int] = {}
    nodes: list[PlanNode] = []
    for k, n in enumerate(plan.nodes):
        if k not in live:
            continue
        n = replace(n, children=tuple(remap[c] for c in n.children))
        key = n.key()
        if key in seen:
            idx = seen[key]
            if n.subexpr and not nodes[idx].subexpr:
                nodes[idx] = replace(nodes[idx], subexpr=True)
        else:
            idx = len(nodes)
            seen[key] = idx
            nodes.append(n)
        remap[k] = idx
    out = replace(plan, nodes=nodes, roots=[(remap[r], b) for r, b in plan.roots])
    if plan.mode == "W":
        out.length = max(1, out.subexpr_count())
    return out


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class OpCounter:
    """Counts non-leaf node evaluations, weighted by batch size."""

    visits: int = 0


def known_offsets(plan: DecodingPlan, knowns: np.ndarray) -> np.ndarray:
    """Column flips ``a_j`` for a batch of known-bit rows, shape ``(B, m)``."""
    knowns = np.asarray(knowns, dtype=np.uint8)
    out = np.zeros(knowns.shape[:-1] + (plan.m,), dtype=np.uint8)
    for j, form in enumerate(plan.known_forms):
        r = 0
        while form >> r:
            if (form >> r) & 1 and r < knowns.shape[-1]:
                out[..., j] ^= knowns[..., r]
            r += 1
    return out


# every op that can move the largest entry of a row away from 1
_RESCALE = {MUL, PAIR_MUL, SCALAR_MUL, PARITY_SELECT, PAIR_JOIN, DIAMOND, PAIR_DIAMOND, SUM_S}


def _row_max(x: np.ndarray) -> np.ndarray:
    """Max over the root axis of an ``(R, B)`` array, kept as ``(1, B)``."""
    top = x[0]
    for r in range(1, x.shape[0]):
        top = np.maximum(top, x[r])
    return top[None, :]


def _rescale(v):
    """Divide by the largest entry over both components and all roots of a row.

    Returns the rescaled value and the ``(1, B)`` divisor.
    """
    top = _row_max(np.maximum(v[0], v[1]) if isinstance(v, tuple) else v)
    top[top == 0] = 1.0
    if isinstance(v, tuple):
        return (v[0] / top, v[1] / top), top
    return v / top, top


def evaluate(plan: DecodingPlan, pairs: np.ndarray, knowns: np.ndarray, *,
             normalize: bool = True, counter: OpCounter | None = None) -> np.ndarray:
    """Evaluate all roots of ``plan`` for a batch.

    ``pairs``: shape ``(B, m, 2)``; ``knowns``: shape ``(B, i-1)``.
    Returns shape ``(B, R)`` for W-mode (one scalar per root; both roots share
    normalization so their ratio is exact) or ``(B, 2)`` for L-mode (the
    homogeneous ratio pair).  With ``normalize`` the inputs and every
    combining node are rescaled per batch row so the largest entry is 1;
    swaps and leaves keep the scale of their child.
    """
    pairs = np.asarray(pairs, dtype=float)
    if normalize:
        top = np.maximum(pairs[..., 0], pairs[..., 1])
        pairs = pairs / np.where(top > 0, top, 1.0)[..., None]
    cols = [(np.ascontiguousarray(pairs[:, j, 0]), np.ascontiguousarray(pairs[:, j, 1])) for j in range(plan.m)]
    return evaluate_columns(plan, cols, knowns, normalize=normalize, counter=counter)


def evaluate_columns(plan: DecodingPlan, cols, knowns: np.ndarray, *,
                     normalize: bool = True, counter: OpCounter | None = None) -> np.ndarray:
    """:func:`evaluate` on per-leaf inputs ``cols[j] = (p0, p1)``, each of shape ``(B,)``.

    The inputs are used as given (callers pass pairs already scaled to a
    largest entry of 1).  Internally a value is an ``(R, B)`` array, or
    ``(1, B)`` while it does not depend on which root is being evaluated;
    pairs are tuples of two such arrays.

    l-plan ops are homogeneous in every argument, so rescaling never changes
    the ratio.  ``PAIR_JOIN`` is not: its two scalars must keep their
    relative size, so W-mode carries the natural log of the factor divided
    out of each node and re-aligns the two branches at every join.
    """
    B = cols[0][0].shape[0]
    knowns = np.asarray(knowns, dtype=np.uint8).reshape(B, -1)
    flips = known_offsets(plan, knowns).astype(bool).T[:, None, :]  # (m, 1, B)
    if plan.mode == "W":
        root_bits = np.array([b for _, b in plan.roots], dtype=bool)
        R = len(root_bits)
        width = knowns.shape[1]
        # u_i is the last hidden bit; columns containing it flip per root
        own = [bool((f >> width) & 1) for f in plan.known_forms]
        flip_of = [flips[j] ^ root_bits[:, None] if own[j] else flips[j] for j in range(plan.m)]
    else:
        R = 1
        flip_of = [flips[j] for j in range(plan.m)]
    cols = [(c0[None, :], c1[None, :]) for c0, c1 in cols]
    vals: list = [None] * len(plan.nodes)
    track = normalize and plan.mode == "W"
    logs: list = [0.0] * len(plan.nodes)  # log of the factor divided out so far
    for k, n in enumerate(plan.nodes):
        op = n.op
        ch = [vals[c] for c in n.children]
        if op in (LEAF, PAIR_LEAF):
            vals[k] = cols[n.leaf]
            continue
        if track and n.children:
            if op == PAIR_JOIN:
                l0, l1 = logs[n.children[0]], logs[n.children[1]]
                top = np.maximum(l0, l1)
                ch = [ch[0] * np.exp(l0 - top), ch[1] * np.exp(l1 - top)]
                logs[k] = top
            elif op in (MUL, PAIR_MUL, SCALAR_MUL, DIAMOND, PAIR_DIAMOND):
                logs[k] = sum(logs[c] for c in n.children)
            else:
                logs[k] = logs[n.children[0]]
        if op in (SIGN_EXP, PAIR_SWAP_IF):
            f = flip_of[n.known_source]
            a0, a1 = ch[0]
            v = (np.where(f, a1, a0), np.where(f, a0, a1))
        elif op in (INV, PAIR_SWAP):
            v = (ch[0][1], ch[0][0])
        elif op in (MUL, PAIR_MUL):
            a0, a1 = ch[0]
            for b0, b1 in ch[1:]:
                a0, a1 = a0 * b0, a1 * b1
            v = (a0, a1)
        elif op == SCALAR_MUL:
            v = ch[0]
            for c in ch[1:]:
                v = v * c
        elif op in (DIAMOND, PAIR_DIAMOND):
            (a0, a1), (b0, b1) = ch
            v = (a0 * b0 + a1 * b1, a0 * b1 + a1 * b0)
        elif op == CONST_ONE:
            v = (np.ones((1, B)), np.ones((1, B)))
        elif op == SCALAR_ONE:
            v = np.ones((1, B))
        elif op == SUM_S:
            v = ch[0][0] + ch[0][1]
        elif op == PARITY_SELECT:
            v = ch[0][n.bit]
        elif op == PAIR_JOIN:
            v = (ch[0], ch[1])
        else:  # pragma: no cover - validate_plan rejects unknown ops
            raise PlanError(op)
        if counter is not None:
            counter.visits += B
        if normalize and op in _RESCALE:
            v, top = _rescale(v)
            if track:
                logs[k] = logs[k] + np.log(top)
        vals[k] = v
    if plan.mode == "W":
        out = np.stack([np.broadcast_to(vals[r], (R, B))[j] for j, (r, _) in enumerate(plan.roots)], axis=1)
    else:
        out = np.stack([vals[plan.roots[0][0]][0][0], vals[plan.roots[0][0]][1][0]], axis=1)
    if normalize:
        top = np.maximum(out[:, 0], out[:, 1]) if out.shape[1] == 2 else out.max(axis=1)
        out = out / np.where(top > 0, top, 1.0)[:, None]
    return out


def ratio_from_pair(p: np.ndarray) -> np.ndarray:
    """``p0 / p1`` with ``inf`` for ``p1 = 0``; raises on ``0/0``."""
    p = np.asarray(p, dtype=float)
    if np.any((p[..., 0] == 0) & (p[..., 1] == 0)):
        raise IndeterminateLLR("0/0 likelihood ratio (all-zero pair upstream)")
    with np.errstate(divide="ignore"):
        return p[..., 0] / p[..., 1]


def pairs_from_ratios(l: np.ndarray) -> np.ndarray:
    """Homogeneous pairs for likelihood ratios; ``inf`` maps to ``(1, 0)``."""
    l = np.asarray(l, dtype=float)
    big = np.isinf(l)
    p0 = np.where(big, 1.0, np.where(l > 1, 1.0, l))
    p1 = np.where(big, 0.0, np.where(l > 1, 1.0 / np.where(l > 1, l, 1.0), 1.0))
    return np.stack([p0, p1], axis=-1)


# ---------------------------------------------------------------------------
# plan files


def plans_to_json(kernel: KernelMatrix, plans: Sequence[DecodingPlan], extra: dict | None = None) -> str:
    doc = {
        "version": FORMAT_VERSION,
        "kernel": {"m": kernel.m, "rows_hex": kernel.rows_hex(), "hash": kernel.digest()},
        "mode": plans[0].mode if plans else None,
        "plans": [p.to_dict() for p in plans],
    }
    if extra:
        doc.update(extra)
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def plans_from_json(text: str) -> tuple[KernelMatrix, list[DecodingPlan], dict]:
    from .gf2 import validate_kernel, int_to_bits

    doc = json.loads(text)
    if doc.get("version") != FORMAT_VERSION:
        raise PlanError(f"unsupported plan file version {doc.get('version')!r}")
    m = int(doc["kernel"]["m"])
    rows = [int_to_bits(int(h, 16), m) for h in doc["kernel"]["rows_hex"]]
    kernel = validate_kernel(rows)
    plans = [DecodingPlan.from_dict(d, kernel) for d in doc["plans"]]
    return kernel, plans, doc
