import math
import os
import time

import numpy as np
import pytest
from scipy.stats import norm

from hdpolar import construction as C
from hdpolar.channel import ChannelParams, awgn_observe, bpsk_pairs, llr_from_pairs, make_rng, sigma_from_ebn0
from hdpolar.decoder import CodeSpec
from hdpolar.sim import CSV_FIELDS, manifest, simulate


def test_sigma_from_ebn0():
    assert sigma_from_ebn0(0.0, 0.5) == pytest.approx(1.0)
    assert ChannelParams(3.0, 1.0).sigma2 == pytest.approx(1 / (2 * 10**0.3))
    with pytest.raises(ValueError):
        sigma_from_ebn0(1.0, 0.0)


def test_bpsk_pairs():
    p = bpsk_pairs(np.array([0.0, 1.0, -2.0]), 1.0)
    assert np.allclose(p[0], [1, 1])
    assert np.allclose(p[1], [1, math.exp(-2)])
    assert np.allclose(p[2], [math.exp(-4), 1])
    assert np.allclose(llr_from_pairs(p), [1, math.exp(2), math.exp(-4)])
    with pytest.raises(ValueError):
        awgn_observe(np.zeros(3), 0.0, make_rng(0))


def test_uncoded_error_rate():
    sigma = sigma_from_ebn0(2.0, 1.0)
    T = 1_000_000
    pairs, _ = awgn_observe(np.zeros(T, dtype=np.uint8), sigma, make_rng(7))
    p = norm.sf(math.sqrt(2 * 10**0.2))
    got = np.mean(pairs[:, 1] > pairs[:, 0])
    assert abs(got - p) < 3 * math.sqrt(p * (1 - p) / T)


def test_rate_one_code_matches_uncoded(G2, plans_cache):
    # with every bit free, SC reproduces the symbol-wise hard decisions
    spec = CodeSpec(G2, 3, tuple(range(1, 9)))
    res = simulate(spec, plans_cache(G2, "W"), [3.0], seed=1, max_frames=4000, min_frame_errors=10**9)
    p = norm.sf(1 / sigma_from_ebn0(3.0, 1.0))
    fer = 1 - (1 - p) ** 8
    pt = res.points[0]
    assert pt.frames == 4000
    assert abs(pt.fer - fer) < 4 * math.sqrt(fer * (1 - fer) / 4000)


def _g2_code(n, ebn0, rate, plans):
    from hdpolar.gf2 import builtin_kernel

    G = builtin_kernel("G2")
    prof = C.ga_construct(G, n, sigma_from_ebn0(ebn0, rate), plans)
    return CodeSpec(G, n, C.select_info_set(prof, int(rate * 2**n)))


def test_fer_decreases_with_snr(G2, plans_cache):
    spec = _g2_code(6, 2.0, 0.5, plans_cache(G2, "L"))
    res = simulate(spec, plans_cache(G2, "W"), [0.0, 2.0, 4.0], seed=2, max_frames=20000, min_frame_errors=200)
    fers = [p.fer for p in res.points]
    assert fers[0] > fers[1] > fers[2]


def test_determinism_and_workers(G2, plans_cache):
    spec = _g2_code(5, 2.0, 0.5, plans_cache(G2, "L"))
    kw = dict(seed=3, max_frames=1500, min_frame_errors=60, block_frames=100)
    a = simulate(spec, plans_cache(G2, "W"), [1.0, 2.0], workers=1, **kw).to_csv()
    b = simulate(spec, plans_cache(G2, "W"), [1.0, 2.0], workers=1, **kw).to_csv()
    c = simulate(spec, plans_cache(G2, "W"), [1.0, 2.0], workers=2, **kw).to_csv()
    assert a == b == c
    assert a.splitlines()[0].split(",") == CSV_FIELDS
    d = simulate(spec, plans_cache(G2, "W"), [1.0, 2.0], workers=1, **(kw | {"seed": 4})).to_csv()
    assert d != a


def test_stop_rule(G2, plans_cache):
    spec = _g2_code(4, 2.0, 0.5, plans_cache(G2, "L"))
    res = simulate(spec, plans_cache(G2, "W"), [-2.0, 8.0], seed=0, max_frames=1000, min_frame_errors=20,
                   block_frames=50)
    low, high = res.points
    assert low.frame_errors >= 20 and low.frames < 1000 and low.frames % 50 == 0
    assert high.frames == 1000
    doc = manifest(res, note="x")
    assert doc["note"] == "x" and "wall_time" in doc["points"][0]
    assert "wall_time" not in res.to_csv()


def test_zero_rate_rejected(G2, plans_cache):
    with pytest.raises(ValueError):
        simulate(CodeSpec(G2, 2, ()), plans_cache(G2, "W"), [1.0])


def test_construction_beats_random_choice(G6, plans_cache):
    n, K, ebn0 = 2, 18, 3.0
    sigma = sigma_from_ebn0(ebn0, K / 36)
    good = CodeSpec(G6, n, C.select_info_set(C.ga_construct(G6, n, sigma, plans_cache(G6, "L")), K))
    rnd = CodeSpec(G6, n, tuple(int(x) for x in make_rng(9).choice(np.arange(1, 37), K, replace=False)))
    kw = dict(seed=5, max_frames=60000, min_frame_errors=300, block_frames=500)
    fg = simulate(good, plans_cache(G6, "W"), [ebn0], **kw).points[0]
    fr = simulate(rnd, plans_cache(G6, "W"), [ebn0], **kw).points[0]
    assert fg.frame_errors >= 300 and fr.frame_errors >= 300
    assert fr.fer >= 10 * fg.fer


@pytest.mark.skipif((os.cpu_count() or 1) < 4, reason="needs at least 4 CPUs to measure scaling")
def test_worker_throughput(G2, plans_cache):
    spec = _g2_code(8, 2.0, 0.5, plans_cache(G2, "L"))
    kw = dict(seed=6, max_frames=8000, min_frame_errors=10**9, block_frames=500)
    t0 = time.perf_counter()
    simulate(spec, plans_cache(G2, "W"), [2.0], workers=1, **kw)
    t1 = time.perf_counter()
    simulate(spec, plans_cache(G2, "W"), [2.0], workers=4, **kw)
    t2 = time.perf_counter()
    assert (t1 - t0) / (t2 - t1) >= 0.6 * 4
