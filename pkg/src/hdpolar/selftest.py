"""Oracle-equivalence checks shared by the ``selftest`` command and the tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import plan as P
from .compiler import compile_kernel
from .decoder import brute_force_bit_channel
from .gf2 import KernelMatrix, builtin_kernel, random_lower_triangular


@dataclass
class OracleReport:
    kernel: str
    mode: str
    cases: int
    worst_rel_err: float

    def ok(self, tol: float = 1e-9) -> bool:
        return self.worst_rel_err <= tol


def _pair_err(got: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Relative deviation of two homogeneous pairs (cross-multiplied)."""
    lhs, rhs = got[:, 0] * ref[:, 1], got[:, 1] * ref[:, 0]
    return np.abs(lhs - rhs) / np.maximum(np.abs(lhs), np.abs(rhs))


def plan_oracle_error(G: KernelMatrix, plans, rng: np.random.Generator, cases: int) -> float:
    """Worst relative deviation of compiled plans from the exhaustive sums.

    W-plans are compared exactly (both components, scale included); L-plans
    by cross-multiplying the ratio against the exhaustive pair.  The
    rescaled evaluation used by the decoder is checked as a ratio as well.
    """
    worst = 0.0
    for plan in plans:
        i = plan.index
        pairs = rng.uniform(0.05, 1.0, size=(cases, G.m, 2))
        knowns = rng.integers(0, 2, size=(cases, i - 1))
        ref = brute_force_bit_channel(G, i, pairs, knowns, "W")
        got = P.evaluate(plan, pairs, knowns, normalize=False)
        if plan.mode == "W":
            got = got * 2.0**plan.scale_log2
            err = (np.abs(got - ref) / np.abs(ref)).max(axis=1)
        else:
            err = _pair_err(got, ref)
        err = np.maximum(err, _pair_err(P.evaluate(plan, pairs, knowns), ref))
        worst = max(worst, float(err.max()))
    return worst


def oracle_suite(random_per_m: int = 20, ms=range(3, 9), cases: int = 50, seed: int = 2024,
                 modes=("L", "W")) -> list[OracleReport]:
    rng = np.random.default_rng(seed)
    kernels = [(name, builtin_kernel(name)) for name in ("G2", "G5", "G6")]
    for m in ms:
        for r in range(random_per_m):
            kernels.append((f"random-m{m}-{r}", random_lower_triangular(m, rng)))
    out = []
    for name, G in kernels:
        for mode in modes:
            plans = compile_kernel(G, mode)
            out.append(OracleReport(name, mode, cases * G.m, plan_oracle_error(G, plans, rng, cases)))
    return out
