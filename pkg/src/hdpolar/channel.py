"""BPSK over AWGN: noise level and likelihood pairs."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def sigma_from_ebn0(ebn0_db: float, rate: float) -> float:
    """Noise std for unit-energy BPSK: ``sigma^2 = 1 / (2 R 10^(EbN0/10))``."""
    if not 0 < rate <= 1:
        raise ValueError("rate must lie in (0, 1]")
    return math.sqrt(1.0 / (2.0 * rate * 10 ** (ebn0_db / 10.0)))


@dataclass(frozen=True)
class ChannelParams:
    ebn0_db: float
    rate: float

    @property
    def sigma(self) -> float:
        return sigma_from_ebn0(self.ebn0_db, self.rate)

    @property
    def sigma2(self) -> float:
        return self.sigma**2


def bpsk_pairs(y, sigma: float) -> np.ndarray:
    """Likelihood pairs ``(W(y|0), W(y|1))`` scaled so the larger is 1.

    With ``llr = 2y/sigma^2`` the pair is ``(1, e^-llr)`` or ``(e^llr, 1)``.
    """
    llr = 2.0 * np.asarray(y, dtype=float) / sigma**2
    small = np.exp(-np.abs(llr))
    pos = llr >= 0
    return np.stack([np.where(pos, 1.0, small), np.where(pos, small, 1.0)], axis=-1)


def awgn_observe(x, sigma: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Send bits ``x`` as ``1 - 2x`` plus Gaussian noise; returns ``(pairs, y)``."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    x = np.asarray(x)
    y = 1.0 - 2.0 * x.astype(float) + sigma * rng.standard_normal(x.shape)
    return bpsk_pairs(y, sigma), y


def llr_from_pairs(pairs) -> np.ndarray:
    """``W(y|0) / W(y|1)`` with ``inf`` where the second component is 0."""
    pairs = np.asarray(pairs, dtype=float)
    with np.errstate(divide="ignore"):
        return pairs[..., 0] / pairs[..., 1]


def make_rng(*key: int) -> np.random.Generator:
    """Counter-based generator keyed by a tuple of non-negative integers."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(key))))
