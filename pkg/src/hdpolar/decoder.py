"""Plan evaluation and successive-cancellation decoding over ``G^(x)n``.

Channel observations are pairs ``(W(y|0), W(y|1))`` of shape ``(..., N, 2)``.
A pair is only meaningful up to a positive factor, so every stage output is
rescaled to a maximum component of 1 before it is passed on.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import plan as P
from .gf2 import KernelMatrix, LengthMismatch, encode, int_to_bits, kron_power, validate_kernel

MAX_BRUTE_M = 20
MAX_BRUTE_N = 16


class TooLarge(ValueError):
    pass


class PlanKernelMismatch(ValueError):
    pass


# ---------------------------------------------------------------------------
# single kernel stage


def eval_plan(plan: P.DecodingPlan, inputs, knowns, *, exact: bool = False,
              counter: P.OpCounter | None = None) -> np.ndarray:
    """Value of bit-channel ``plan.index`` for one or many kernel inputs.

    L-mode takes likelihood ratios of shape ``(..., m)`` and returns ratios.
    W-mode takes pairs of shape ``(..., m, 2)`` and returns pairs
    ``(W(.|0), W(.|1))``; with ``exact`` they are the unnormalized sums
    (without the ``2^-(m-1)`` factor), otherwise scaled so the max is 1.
    """
    m = plan.m
    if plan.mode == "L":
        x = np.asarray(inputs, dtype=float)
        if x.shape[-1] != m:
            raise LengthMismatch(f"expected {m} ratios, got shape {x.shape}")
        pairs = P.pairs_from_ratios(x)
    else:
        pairs = np.asarray(inputs, dtype=float)
        if pairs.shape[-2:] != (m, 2):
            raise LengthMismatch(f"expected pairs of shape (..., {m}, 2), got {pairs.shape}")
    batch = pairs.shape[:-2]
    kn = np.asarray(knowns, dtype=np.int64)
    if kn.shape[-1:] != (plan.index - 1,) and not (plan.index == 1 and kn.size == 0):
        raise LengthMismatch(f"expected {plan.index - 1} known bits, got shape {kn.shape}")
    flat = pairs.reshape(-1, m, 2)
    kn = np.broadcast_to(kn, batch + (plan.index - 1,)).reshape(flat.shape[0], -1)
    out = P.evaluate(plan, flat, kn, normalize=not exact, counter=counter)
    if plan.mode == "L":
        return P.ratio_from_pair(out).reshape(batch)
    if exact:
        out = out * 2.0**plan.scale_log2
    return out.reshape(batch + (2,))


def _codewords(G: KernelMatrix, i: int, knowns: np.ndarray) -> np.ndarray:
    """All ``u G`` with prefix ``knowns`` (shape ``(B, i-1)``): ``(B, 2, 2^(m-i), m)``."""
    m = G.m
    garr = G.to_array().astype(np.int64)
    tails = np.array(list(itertools.product((0, 1), repeat=m - i)), dtype=np.int64).reshape(2 ** (m - i), m - i)
    B = knowns.shape[0]
    u = np.zeros((B, 2, tails.shape[0], m), dtype=np.int64)
    u[..., : i - 1] = knowns[:, None, None, :]
    u[:, 1, :, i - 1] = 1
    u[..., i:] = tails
    return (u @ garr) & 1


def brute_force_bit_channel(G: KernelMatrix, i: int, inputs, knowns, mode: str = "W") -> np.ndarray:
    """Exhaustive bit-channel value, the reference for compiled plans.

    W-mode: ``(sum_{u_{i+1..m}} W(y|uG) for u_i = 0, 1)`` from pairs
    ``(..., m, 2)``.  L-mode: the ratio of the two sums from ratios
    ``(..., m)``.  The ``2^-(m-1)`` normalization is left out in both.
    """
    if G.m > MAX_BRUTE_M:
        raise TooLarge(f"exhaustive sum over 2^{G.m} terms is not supported (m > {MAX_BRUTE_M})")
    if not 1 <= i <= G.m:
        raise IndexError(f"bit index {i} outside 1..{G.m}")
    m = G.m
    pairs = P.pairs_from_ratios(inputs) if mode == "L" else np.asarray(inputs, dtype=float)
    if pairs.shape[-2:] != (m, 2):
        raise LengthMismatch(f"expected {m} channel inputs, got shape {pairs.shape}")
    batch = pairs.shape[:-2]
    flat = pairs.reshape(-1, m, 2)
    kn = np.broadcast_to(np.asarray(knowns, dtype=np.int64), batch + (i - 1,)).reshape(flat.shape[0], i - 1)
    x = _codewords(G, i, kn)
    B = flat.shape[0]
    cols = np.arange(m)
    # pick pairs[b, k, x_k] for every term and multiply over k
    vals = flat[np.arange(B)[:, None, None, None], cols, x]
    out = vals.prod(axis=-1).sum(axis=-1)
    if mode == "L":
        return P.ratio_from_pair(out).reshape(batch)
    return out.reshape(batch + (2,))


# ---------------------------------------------------------------------------
# codes


@dataclass(frozen=True)
class CodeSpec:
    """Polar code over ``G^(x)n``; ``info_set`` is 1-based and sorted."""

    kernel: KernelMatrix
    n: int
    info_set: tuple[int, ...]
    frozen_values: tuple[int, ...] | None = None  # length N, None means all zero
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        N = self.N
        s = tuple(sorted(int(a) for a in self.info_set))
        if len(set(s)) != len(s) or (s and (s[0] < 1 or s[-1] > N)):
            raise ValueError(f"info set must hold distinct indices in 1..{N}")
        object.__setattr__(self, "info_set", s)
        if self.frozen_values is not None and len(self.frozen_values) != N:
            raise LengthMismatch(f"frozen values must have length {N}")

    @property
    def N(self) -> int:
        return self.kernel.m**self.n

    @property
    def K(self) -> int:
        return len(self.info_set)

    @property
    def rate(self) -> float:
        return self.K / self.N

    def info_mask(self) -> np.ndarray:
        mask = np.zeros(self.N, dtype=bool)
        mask[np.asarray(self.info_set, dtype=np.int64) - 1] = True
        return mask

    def frozen_bits(self) -> np.ndarray:
        vals = np.zeros(self.N, dtype=np.uint8)
        if self.frozen_values is not None:
            vals[:] = self.frozen_values
        vals[self.info_mask()] = 0
        return vals

    def place(self, info_bits) -> np.ndarray:
        """Full ``u`` vectors (``(..., N)``) carrying ``info_bits`` on the info set."""
        info_bits = np.asarray(info_bits, dtype=np.uint8)
        u = np.broadcast_to(self.frozen_bits(), info_bits.shape[:-1] + (self.N,)).copy()
        u[..., self.info_mask()] = info_bits
        return u

    def encode(self, info_bits) -> np.ndarray:
        return encode(self.place(info_bits), self.kernel, self.n)

    def to_dict(self) -> dict:
        d = {
            "kernel": {"m": self.kernel.m, "rows_hex": self.kernel.rows_hex(), "hash": self.kernel.digest()},
            "n": self.n,
            "N": self.N,
            "K": self.K,
            "info_set": list(self.info_set),
        }
        if self.frozen_values is not None:
            d["frozen_values"] = list(map(int, self.frozen_values))
        d.update(self.meta)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "CodeSpec":
        m = int(d["kernel"]["m"])
        kernel = validate_kernel([int_to_bits(int(h, 16), m) for h in d["kernel"]["rows_hex"]])
        fv = d.get("frozen_values")
        known = {"kernel", "n", "N", "K", "info_set", "frozen_values"}
        return cls(kernel, int(d["n"]), tuple(d["info_set"]), None if fv is None else tuple(fv),
                   {k: v for k, v in d.items() if k not in known})

    @classmethod
    def from_json(cls, text: str) -> "CodeSpec":
        return cls.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# SC recursion

# A stage maps (bit index a, per-leaf columns [(p0, p1)], knowns (B, a-1))
# to the synthesized pairs (B, 2), scaled to a largest entry of 1.
StageFn = Callable[[int, list, np.ndarray], np.ndarray]


def _normalized(p: np.ndarray) -> np.ndarray:
    s = p.max(axis=-1, keepdims=True)
    return p / np.where(s > 0, s, 1.0)


def plan_stage(plans: Sequence[P.DecodingPlan], counter: P.OpCounter | None = None) -> StageFn:
    """Kernel-stage evaluator backed by compiled plans (either mode)."""
    by_index = {p.index: p for p in plans}

    def stage(a: int, cols: list, knowns: np.ndarray) -> np.ndarray:
        plan = by_index[a]
        out = P.evaluate_columns(plan, cols, knowns, counter=counter)
        if plan.mode == "L" and np.any(out.max(axis=-1) == 0):
            # telescoped ratios are undefined once an input ratio is 0 or inf
            raise P.IndeterminateLLR(f"0/0 at index {a}; l-plans need finite nonzero input ratios")
        # W roots and the homogeneous L ratio (l, 1) are both valid pairs
        return out

    return stage


def brute_stage(G: KernelMatrix) -> StageFn:
    """Kernel-stage evaluator that sums the bit-channel exhaustively."""

    def stage(a: int, cols: list, knowns: np.ndarray) -> np.ndarray:
        pairs = np.stack([np.stack(c, axis=-1) for c in cols], axis=1)
        return _normalized(brute_force_bit_channel(G, a, pairs, knowns, "W"))

    return stage


def _check_plans(G: KernelMatrix, plans: Sequence[P.DecodingPlan]) -> None:
    if sorted(p.index for p in plans) != list(range(1, G.m + 1)):
        raise PlanKernelMismatch(f"need one plan per index 1..{G.m}")
    for p in plans:
        if p.kernel != G:
            raise PlanKernelMismatch(f"plan {p.index} was compiled for kernel {p.kernel.digest()}, "
                                     f"code uses {G.digest()}")


def _sc(G: KernelMatrix, n: int, pairs: np.ndarray, stage: StageFn, frozen: np.ndarray,
        frozen_vals: np.ndarray, genie: np.ndarray | None) -> tuple[np.ndarray, np.ndarray]:
    """Batched SC over frames. Returns ``(u_hat, raw, ties)``, all ``(F, N)``.

    ``raw`` is the hard decision of every bit-channel output whether or not
    the bit is frozen and ``ties`` marks outputs with equal components; with
    ``genie`` the recursion is fed the true bits.
    """
    F, N = pairs.shape[:2]
    m = G.m
    garr = G.to_array().astype(bool)
    u_hat = np.zeros((F, N), dtype=np.uint8)
    raw = np.zeros((F, N), dtype=np.uint8)
    ties = np.zeros((F, N), dtype=bool)

    def rec(p0: np.ndarray, p1: np.ndarray, offset: int) -> np.ndarray:
        """Decode ``u[offset:offset+L]`` from pairs ``(p0, p1)``, each ``(F, L)``; returns its codeword."""
        L = p0.shape[1]
        if L == 1:
            d = (p1[:, 0] > p0[:, 0]).astype(np.uint8)  # ties go to 0
            raw[:, offset] = d
            ties[:, offset] = p1[:, 0] == p0[:, 0]
            if genie is not None:
                bit = genie[:, offset]
            elif frozen[offset]:
                bit = np.full(F, frozen_vals[offset], dtype=np.uint8)
            else:
                bit = d
            u_hat[:, offset] = bit
            return bit[:, None]
        sub = L // m
        # leaf j of the kernel instance at position t reads block j at t
        cols = [(p0[:, j * sub:(j + 1) * sub].reshape(-1), p1[:, j * sub:(j + 1) * sub].reshape(-1))
                for j in range(m)]
        vs: list[np.ndarray] = []
        knowns = np.zeros((F * sub, m - 1), dtype=np.uint8)
        for a in range(1, m + 1):
            synth = stage(a, cols, knowns[:, : a - 1])
            v = rec(synth[:, 0].reshape(F, sub), synth[:, 1].reshape(F, sub), offset + (a - 1) * sub)
            vs.append(v)
            if a < m:
                knowns[:, a - 1] = v.reshape(-1)
        # output block b is the XOR of v_a over the rows with g_ab = 1
        x = np.zeros((F, m, sub), dtype=np.uint8)
        for b in range(m):
            for a in range(m):
                if garr[a, b]:
                    x[:, b] ^= vs[a]
        return x.reshape(F, L)

    top = np.maximum(pairs[..., 0], pairs[..., 1])
    top = np.where(top > 0, top, 1.0)
    rec(pairs[..., 0] / top, pairs[..., 1] / top, 0)
    return u_hat, raw, ties


def _prepare(spec: CodeSpec, obs) -> tuple[np.ndarray, bool]:
    pairs = np.asarray(obs, dtype=float)
    single = pairs.ndim == 2
    if single:
        pairs = pairs[None]
    if pairs.ndim != 3 or pairs.shape[-1] != 2:
        raise LengthMismatch(f"observations must have shape (N, 2) or (F, N, 2), got {pairs.shape}")
    if pairs.shape[1] != spec.N:
        raise LengthMismatch(f"expected {spec.N} observations, got {pairs.shape[1]}")
    return pairs, single


def sc_decode(spec: CodeSpec, plans: Sequence[P.DecodingPlan] | None, obs, *,
              counter: P.OpCounter | None = None, stage: StageFn | None = None):
    """SC decoding of one frame ``(N, 2)`` or a batch ``(F, N, 2)``.

    Returns ``(u_hat, info_bits)``.  Passing ``stage`` overrides the plans
    (used for the exhaustive reference decoder).
    """
    if stage is None:
        _check_plans(spec.kernel, plans)
        stage = plan_stage(plans, counter)
    pairs, single = _prepare(spec, obs)
    u_hat, _, _ = _sc(spec.kernel, spec.n, pairs, stage, ~spec.info_mask(), spec.frozen_bits(), None)
    info = u_hat[:, spec.info_mask()]
    return (u_hat[0], info[0]) if single else (u_hat, info)


def reference_sc_decode(spec: CodeSpec, obs):
    """SC decoding with every kernel stage summed exhaustively."""
    return sc_decode(spec, None, obs, stage=brute_stage(spec.kernel))


def genie_decisions(kernel: KernelMatrix, n: int, plans: Sequence[P.DecodingPlan], obs, genie,
                    counter: P.OpCounter | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Hard decision of every bit-channel when all earlier bits come from ``genie``.

    Returns ``(decisions, ties)``; a tie (equal pair components) decides 0.
    """
    _check_plans(kernel, plans)
    pairs = np.asarray(obs, dtype=float)
    genie = np.asarray(genie, dtype=np.uint8)
    N = kernel.m**n
    if pairs.shape[1:] != (N, 2) or genie.shape != pairs.shape[:2]:
        raise LengthMismatch("genie bits and observations must be (F, N) and (F, N, 2)")
    frozen = np.zeros(N, dtype=bool)
    _, raw, ties = _sc(kernel, n, pairs, plan_stage(plans, counter), frozen, frozen.astype(np.uint8), genie)
    return raw, ties


def full_brute_sc_decode(spec: CodeSpec, obs):
    """SC decoding from the length-N bit-channel definition, for small ``N``.

    Bit ``i`` is decided from ``sum over u_{i+1..N}`` of ``prod_j W(y_j | (uG^(x)n)_j)``;
    independent of the recursive layout, so it pins the encode convention.
    """
    N = spec.N
    if N > MAX_BRUTE_N:
        raise TooLarge(f"full exhaustive SC supports N <= {MAX_BRUTE_N}")
    pairs, single = _prepare(spec, obs)
    Gn = kron_power(spec.kernel, spec.n).astype(np.int64)
    frozen = ~spec.info_mask()
    fvals = spec.frozen_bits()
    F = pairs.shape[0]
    u_hat = np.zeros((F, N), dtype=np.uint8)
    for f in range(F):
        for i in range(N):
            tails = np.array(list(itertools.product((0, 1), repeat=N - i - 1)), dtype=np.int64).reshape(2 ** (N - i - 1), N - i - 1)
            score = np.zeros(2)
            for ui in (0, 1):
                u = np.zeros((tails.shape[0], N), dtype=np.int64)
                u[:, :i] = u_hat[f, :i]
                u[:, i] = ui
                u[:, i + 1:] = tails
                x = (u @ Gn) & 1
                score[ui] = pairs[f, np.arange(N), x].prod(axis=-1).sum()
            d = int(score[1] > score[0])
            u_hat[f, i] = fvals[i] if frozen[i] else d
    info = u_hat[:, spec.info_mask()]
    return (u_hat[0], info[0]) if single else (u_hat, info)
