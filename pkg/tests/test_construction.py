import math

import numpy as np
import pytest
from scipy.stats import kendalltau, norm

from hdpolar import construction as C
from hdpolar.channel import sigma_from_ebn0


def _qde(sigma, n, step=0.1, lim=40.0):
    """Density evolution for G2 on a quantized LLR grid (independent oracle)."""
    grid = np.arange(-lim, lim + step / 2, step)
    K = len(grid)
    mu = 2 / sigma**2
    edges = np.concatenate([[-np.inf], (grid[:-1] + grid[1:]) / 2, [np.inf]])
    ch = np.diff(norm.cdf(edges, loc=mu, scale=math.sqrt(2 * mu)))
    t = np.tanh(grid / 2)
    prod = np.clip(np.outer(t, t), -1 + 1e-15, 1 - 1e-15)
    chk_idx = np.clip(np.rint(2 * np.arctanh(prod) / step).astype(int) + K // 2, 0, K - 1).ravel()

    def var(a, b):
        c = np.convolve(a, b)  # index offset is 2 * (K // 2)
        out = c[K // 2: K // 2 + K].copy()
        out[0] += c[: K // 2].sum()
        out[-1] += c[K // 2 + K:].sum()
        return out

    def chk(a, b):
        return np.bincount(chk_idx, weights=np.outer(a, b).ravel(), minlength=K)

    dens = [ch]
    for _ in range(n):
        dens = [f(d, d) for d in dens for f in (chk, var)]
    return np.array([d[grid < 0].sum() + 0.5 * d[np.abs(grid) < step / 2].sum() for d in dens])


def test_mc_n1_closed_form(G2, plans_cache):
    sigma = sigma_from_ebn0(1.0, 0.5)
    T = 200_000
    prof = C.monte_carlo_construct(G2, 1, sigma, T, plans_cache(G2, "W"), seed=1)
    p = norm.sf(1 / sigma)
    exact = np.array([2 * p * (1 - p), norm.sf(math.sqrt(2) / sigma)])
    tol = 4 * np.sqrt(exact * (1 - exact) / T)
    assert np.all(np.abs(prof.pe - exact) < tol)


def test_ga_n1(G2, plans_cache):
    sigma = 0.8
    prof = C.ga_construct(G2, 1, sigma, plans_cache(G2, "L"))
    mu = 2 / sigma**2
    means = np.array(prof.meta["means"])
    assert 0 < means[0] < mu < means[1]
    assert means[1] == pytest.approx(2 * mu)
    # the variable-node channel is exactly Gaussian
    assert prof.pe[1] == pytest.approx(norm.sf(math.sqrt(2) / sigma), rel=1e-12)


def test_mc_matches_quantized_de(G2, plans_cache):
    sigma = sigma_from_ebn0(2.0, 0.5)
    T = 40_000
    de = _qde(sigma, 3)
    prof = C.monte_carlo_construct(G2, 3, sigma, T, plans_cache(G2, "W"), seed=2)
    tol = 4 * np.sqrt(de * (1 - de) / T) + 0.005
    assert np.all(np.abs(prof.pe - de) < tol)
    assert list(np.argsort(prof.pe)[:4]) == list(np.argsort(de)[:4])


def test_ga_ranking_close_to_de(G2, plans_cache):
    sigma = sigma_from_ebn0(2.0, 0.5)
    de = _qde(sigma, 4)
    ga = C.ga_construct(G2, 4, sigma, plans_cache(G2, "L"))
    assert kendalltau(de, ga.pe).statistic > 0.9


def test_noiseless_mc_is_perfect(G6, plans_cache):
    prof = C.monte_carlo_construct(G6, 2, 1e-3, 200, plans_cache(G6, "W"))
    assert np.all(prof.pe == 0)


def test_mc_convergence(G2, plans_cache):
    sigma = sigma_from_ebn0(2.0, 0.5)
    a = C.monte_carlo_construct(G2, 5, sigma, 5000, plans_cache(G2, "W"), seed=3)
    b = C.monte_carlo_construct(G2, 5, sigma, 10000, plans_cache(G2, "W"), seed=4)
    p = np.clip((a.errors + b.errors) / 15000, 1e-4, None)
    sd = np.sqrt(p * (1 - p) * (1 / 5000 + 1 / 10000))
    assert np.mean(np.abs(a.pe - b.pe) <= 4 * sd) >= 0.99


def test_ga_means_finite_and_positive(G6, plans_cache):
    mu = C.ga_means(G6, 2, 0.9, plans_cache(G6, "L"))
    assert np.all(np.isfinite(mu)) and np.all(mu > 0)


def test_ga_g6_agrees_with_mc(G6, plans_cache):
    sigma = sigma_from_ebn0(2.0, 0.5)
    ga = C.ga_construct(G6, 2, sigma, plans_cache(G6, "L"))
    mc = C.monte_carlo_construct(G6, 2, sigma, 20000, plans_cache(G6, "W"), seed=5)
    assert kendalltau(ga.pe, mc.pe).statistic > 0.8


def test_ga_needs_l_plans(G2, plans_cache):
    with pytest.raises(ValueError):
        C.ga_construct(G2, 2, 1.0, plans_cache(G2, "W"))


def test_phi_pieces():
    x = np.linspace(0.1, 200, 500)
    lp = C.log_phi(x)
    assert np.all(lp <= 0) and np.all(np.diff(lp[x < 10]) < 0) and np.all(np.diff(lp[x > 10]) < 0)
    assert np.allclose(C.inv_log_phi(lp), x, rtol=1e-9)
    assert C.log_phi(np.array([0.0]))[0] == 0.0
    assert C.inv_log_phi(np.array([0.0]))[0] == 0.0
    # huge means stay representable in the log domain
    assert np.isfinite(C.log_phi(np.array([1e6]))[0])


def test_ga_check_properties():
    a = np.array([0.5, 2.0, 8.0, 30.0])
    b = np.array([3.0, 3.0, 3.0, 3.0])
    out = C.ga_check(a, b)
    assert np.all(out > 0) and np.all(out < np.minimum(a, b))
    assert np.allclose(C.ga_check(b, a), out)
    assert np.allclose(C.ga_check(-a, b), -out)


def test_select_info_set_and_union_bound():
    prof = C.ReliabilityProfile(np.array([0.3, 0.01, 0.01, 0.2, 0.0]), "mc")
    assert C.select_info_set(prof, 2) == (2, 5)
    assert C.select_info_set(prof, 3) == (2, 3, 5)
    assert C.select_info_set(prof, 0) == ()
    assert C.select_info_set(prof, 5) == (1, 2, 3, 4, 5)
    with pytest.raises(ValueError):
        C.select_info_set(prof, 6)
    assert C.union_bound_fer(prof, ()) == 0.0
    assert C.union_bound_fer(prof, (2, 3)) == pytest.approx(0.02)
    big = C.ReliabilityProfile(np.full(10, 0.3), "mc")
    assert C.union_bound_fer(big, range(1, 11)) == 1.0
    assert C.union_bound_fer(big, range(1, 11), clamp=False) == pytest.approx(3.0)


def test_ga_rank_uses_log(G2, plans_cache):
    # at high SNR many P_e underflow to 0; the log keeps them ordered
    prof = C.ga_construct(G2, 8, 0.2, plans_cache(G2, "L"))
    assert np.sum(prof.pe == 0) > 1
    assert len(set(prof.log_pe.tolist())) > len(set(prof.pe.tolist()))
    assert C.select_info_set(prof, 1) == (256,)


def test_mc_requires_trials(G2, plans_cache):
    with pytest.raises(ValueError):
        C.monte_carlo_construct(G2, 1, 1.0, 0, plans_cache(G2, "W"))
