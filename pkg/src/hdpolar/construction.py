"""Information-set selection: genie-aided Monte Carlo and Gaussian approximation.

Bit-channel ``p`` (0-based) of ``G^(x)n`` is reached by applying kernel stage
``d_1`` to the physical channel, then ``d_2`` to the result and so on, where
``d_1 d_2 ... d_n`` are the base-``m`` digits of ``p`` (most significant
first).  This matches the block layout of :func:`hdpolar.gf2.encode`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import log_ndtr

from . import plan as P
from .channel import bpsk_pairs, make_rng
from .decoder import genie_decisions
from .gf2 import KernelMatrix

# Two-piece approximation of phi(x) = 1 - E[tanh(L/2)], L ~ N(x, 2x).
PHI_A = -0.4527
PHI_B = 0.86
PHI_C = 0.0218
PHI_SPLIT = 10.0
PHI_TOL = 1e-12


class NonConvergent(ArithmeticError):
    pass


@dataclass
class ReliabilityProfile:
    """Per bit-channel error probability estimates (index 0 is bit 1)."""

    pe: np.ndarray
    method: str
    ebn0_db: float | None = None
    trials: int | None = None
    errors: np.ndarray | None = None
    log_pe: np.ndarray | None = None  # GA keeps the log to rank channels below float range
    meta: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return len(self.pe)

    def rank_key(self) -> np.ndarray:
        if self.log_pe is not None:
            return self.log_pe
        with np.errstate(divide="ignore"):
            return np.log(self.pe)

    def to_dict(self) -> dict:
        d = {"method": self.method, "ebn0_db": self.ebn0_db, "pe": [float(x) for x in self.pe]}
        if self.trials is not None:
            d["trials"] = int(self.trials)
        if self.errors is not None:
            d["errors"] = [float(x) for x in self.errors]
        if self.log_pe is not None:
            d["log_pe"] = [float(x) for x in self.log_pe]
        d.update(self.meta)
        return d


def select_info_set(profile: ReliabilityProfile, K: int) -> tuple[int, ...]:
    """The ``K`` most reliable indices (1-based, sorted); ties go to the smaller index."""
    N = profile.N
    if not 0 <= K <= N:
        raise ValueError(f"K must lie in 0..{N}")
    key = profile.rank_key()
    order = np.lexsort((np.arange(N), key))  # primary: key, secondary: index
    return tuple(sorted(int(k) + 1 for k in order[:K]))


def union_bound_fer(profile: ReliabilityProfile, info_set: Sequence[int], clamp: bool = True) -> float:
    """``sum of P_e`` over the info set, clamped to ``[0, 1]`` unless asked otherwise."""
    idx = np.asarray(list(info_set), dtype=np.int64) - 1
    total = float(np.sum(profile.pe[idx])) if idx.size else 0.0
    return min(max(total, 0.0), 1.0) if clamp else total


# ---------------------------------------------------------------------------
# Monte Carlo


def monte_carlo_construct(kernel: KernelMatrix, n: int, sigma: float, trials: int,
                          plans: Sequence[P.DecodingPlan], seed: int = 0, batch: int = 1000,
                          ebn0_db: float | None = None) -> ReliabilityProfile:
    """Genie-aided SC estimates of every bit-channel's error probability.

    The all-zero codeword is sent and each trial scores all ``N`` channels
    in one pass: every decision is fed the true (zero) earlier bits.  An
    output with equal components counts as half an error, the expected
    score of a fair tie-break; without this, channels too noisy to resolve
    in floating point would look perfect.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    N = kernel.m**n
    half_errors = np.zeros(N, dtype=np.int64)
    done = 0
    block = 0
    while done < trials:
        F = min(batch, trials - done)
        rng = make_rng(seed, block)
        y = 1.0 + sigma * rng.standard_normal((F, N))
        raw, ties = genie_decisions(kernel, n, plans, bpsk_pairs(y, sigma), np.zeros((F, N), dtype=np.uint8))
        half_errors += 2 * raw.sum(axis=0, dtype=np.int64) + ties.sum(axis=0, dtype=np.int64)
        done += F
        block += 1
    errors = half_errors / 2
    return ReliabilityProfile(errors / trials, "mc", ebn0_db, trials, errors, meta={"seed": seed})


# ---------------------------------------------------------------------------
# Gaussian approximation


def log_phi(x) -> np.ndarray:
    """``log phi(x)`` for ``x >= 0``, computed without underflow."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    lo = (x > 0) & (x < PHI_SPLIT)
    hi = x >= PHI_SPLIT
    # the fitted piece slightly exceeds 1 near 0; phi is a probability
    out[lo] = np.minimum(PHI_A * x[lo] ** PHI_B + PHI_C, 0.0)
    xh = x[hi]
    out[hi] = 0.5 * np.log(np.pi / xh) - xh / 4.0 + np.log1p(-10.0 / (7.0 * xh))
    return out


def inv_log_phi(t) -> np.ndarray:
    """Solve ``log_phi(x) = t`` by bisection (``t <= 0``)."""
    t = np.asarray(t, dtype=float)
    lo = np.zeros_like(t)
    # log_phi(x) <= -x/4 + 1 for large x, so this bracket always holds
    hi = np.maximum(4.0 * (1.0 - t), 2 * PHI_SPLIT)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        above = log_phi(mid) > t
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
        if np.all(hi - lo <= PHI_TOL * np.maximum(1.0, hi)):
            break
    else:  # pragma: no cover - bisection halves the bracket every step
        raise NonConvergent("phi inversion did not converge")
    return np.where(t >= 0, 0.0, 0.5 * (lo + hi))


def ga_check(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Mean of the check combination of two Gaussian LLRs with means ``a``, ``b``.

    ``1 - phi(|out|) = (1 - phi(|a|)) (1 - phi(|b|))`` with the sign of ``a * b``.
    """
    la, lb = log_phi(np.abs(a)), log_phi(np.abs(b))
    # log(pa + pb - pa*pb) = log(1 - (1 - pa)(1 - pb))
    s = np.logaddexp(la, lb)
    t = s + np.log1p(-np.exp(la + lb - s))
    return np.sign(a) * np.sign(b) * inv_log_phi(np.minimum(t, 0.0))


def ga_stage(plan: P.DecodingPlan, mu: np.ndarray) -> np.ndarray:
    """Propagate LLR means through an l-plan whose inputs all have mean ``mu``."""
    if plan.mode != "L":
        raise ValueError("Gaussian approximation runs on l-plans")
    vals: list[np.ndarray | None] = [None] * len(plan.nodes)
    for k, nd in enumerate(plan.nodes):
        ch = [vals[c] for c in nd.children]
        if nd.op == P.LEAF:
            v = mu
        elif nd.op == P.SIGN_EXP:
            v = ch[0]  # the all-zero word makes every a_j zero
        elif nd.op == P.INV:
            v = -ch[0]
        elif nd.op == P.MUL:
            v = np.sum(ch, axis=0)
        elif nd.op == P.DIAMOND:
            v = ga_check(ch[0], ch[1])
        elif nd.op == P.CONST_ONE:
            v = np.zeros_like(mu)
        else:
            raise ValueError(f"unexpected op {nd.op} in an l-plan")
        vals[k] = v
    return vals[plan.roots[0][0]]


def ga_means(kernel: KernelMatrix, n: int, sigma: float, plans: Sequence[P.DecodingPlan]) -> np.ndarray:
    by_index = sorted(plans, key=lambda p: p.index)
    if [p.index for p in by_index] != list(range(1, kernel.m + 1)):
        raise ValueError(f"need one l-plan per index 1..{kernel.m}")
    mu = np.array([2.0 / sigma**2])
    for _ in range(n):
        mu = np.stack([ga_stage(p, mu) for p in by_index], axis=1).reshape(-1)
    return mu


def ga_construct(kernel: KernelMatrix, n: int, sigma: float, plans: Sequence[P.DecodingPlan],
                 ebn0_db: float | None = None) -> ReliabilityProfile:
    """GA density evolution: ``P_e = Q(mu / sqrt(2 |mu|))`` per channel (``Q(sqrt(mu/2))`` for ``mu > 0``)."""
    mu = ga_means(kernel, n, sigma, plans)
    z = np.where(mu != 0, mu / np.sqrt(2.0 * np.abs(np.where(mu != 0, mu, 1.0))), 0.0)
    log_pe = log_ndtr(-z)
    return ReliabilityProfile(np.exp(log_pe), "ga", ebn0_db, log_pe=log_pe,
                              meta={"means": [float(x) for x in mu]})
