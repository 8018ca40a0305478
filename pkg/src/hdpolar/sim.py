"""Frame/bit error-rate simulation of SC-decoded codes over BPSK-AWGN.

Frames are drawn in fixed-size blocks.  Block ``b`` of SNR point ``s`` uses
its own generator keyed by ``(seed, s, b)``, and blocks are tallied strictly
in order until the stop rule fires, so results do not depend on the worker
count or on scheduling.
"""

from __future__ import annotations

import csv
import io
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import plan as P
from .channel import awgn_observe, make_rng, sigma_from_ebn0
from .decoder import CodeSpec, sc_decode

THREADS_ENV = "HDPOLAR_WORKERS"
CSV_FIELDS = ["ebn0_db", "frames", "frame_errors", "bit_errors", "fer", "ber", "seed"]


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


@dataclass
class SimPoint:
    ebn0_db: float
    frames: int
    frame_errors: int
    bit_errors: int
    seed: int
    bits: int = 0  # info bits sent
    wall_time: float = 0.0

    @property
    def fer(self) -> float:
        return self.frame_errors / self.frames if self.frames else 0.0

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits if self.bits else 0.0


@dataclass
class SimResult:
    points: list[SimPoint] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for p in self.points:
            w.writerow([repr(float(p.ebn0_db)), p.frames, p.frame_errors, p.bit_errors,
                        repr(p.fer), repr(p.ber), p.seed])
        return buf.getvalue()


def run_block(spec: CodeSpec, plans: Sequence[P.DecodingPlan], sigma: float, seed: int,
              point: int, block: int, frames: int) -> tuple[int, int]:
    """Simulate one block of frames; returns ``(frame errors, info-bit errors)``."""
    rng = make_rng(seed, point, block)
    info = rng.integers(0, 2, size=(frames, spec.K), dtype=np.uint8)
    x = spec.encode(info)
    pairs, _ = awgn_observe(x, sigma, rng)
    _, decoded = sc_decode(spec, plans, pairs)
    wrong = decoded != info
    return int(wrong.any(axis=1).sum()), int(wrong.sum())


def _run_block_args(args):
    return run_block(*args)


def simulate(spec: CodeSpec, plans: Sequence[P.DecodingPlan], ebn0_db: Sequence[float], *,
             seed: int = 0, max_frames: int = 100_000, min_frame_errors: int = 100,
             block_frames: int = 200, workers: int | None = None) -> SimResult:
    """FER/BER per Eb/N0 point.

    A point stops after the first block at which ``min_frame_errors`` frame
    errors or ``max_frames`` frames are reached.  The last block is trimmed
    to ``max_frames``.
    """
    workers = default_workers() if workers is None else max(1, workers)
    if spec.K == 0:
        raise ValueError("code carries no information bits")
    result = SimResult(meta={"seed": seed, "max_frames": max_frames, "min_frame_errors": min_frame_errors,
                             "block_frames": block_frames})
    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    try:
        for s, ebn0 in enumerate(ebn0_db):
            sigma = sigma_from_ebn0(float(ebn0), spec.rate)
            t0 = time.perf_counter()
            frames = ferr = berr = 0
            block = 0
            while frames < max_frames and ferr < min_frame_errors:
                # dispatch a wave of blocks, then consume them in order
                sizes = []
                left = max_frames - frames
                for _ in range(workers):
                    if left <= 0:
                        break
                    sizes.append(min(block_frames, left))
                    left -= sizes[-1]
                args = [(spec, plans, sigma, seed, s, block + k, f) for k, f in enumerate(sizes)]
                outs = list(pool.map(_run_block_args, args)) if pool else [run_block(*a) for a in args]
                for f, (fe, be) in zip(sizes, outs):
                    if frames >= max_frames or ferr >= min_frame_errors:
                        break
                    frames += f
                    ferr += fe
                    berr += be
                    block += 1
            result.points.append(SimPoint(float(ebn0), frames, ferr, berr, seed, frames * spec.K,
                                          time.perf_counter() - t0))
    finally:
        if pool is not None:
            pool.shutdown()
    return result


def manifest(result: SimResult, **extra) -> dict:
    """Run record for the JSON manifest; wall times live here, not in the CSV."""
    doc = dict(result.meta)
    doc["points"] = [
        {k: v for k, v in asdict(p).items()} | {"fer": p.fer, "ber": p.ber} for p in result.points
    ]
    doc.update(extra)
    return doc
