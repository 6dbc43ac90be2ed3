"""Independent reference computations and random problem generators for the tests."""
from __future__ import annotations

import math

import mpmath as mp
import numpy as np
from scipy import integrate, stats

from mixedpl.likelihood import (
    ExtendedDesign,
    OrdinalBounds,
    case1_ord_ord,
    case2_gauss_gauss,
    case3_ord_gauss,
    uni_gaussian,
    uni_ordinal,
)

mp.mp.dps = 30


def mp_bvn_cdf(x, y, rho):
    """Phi2 as a 1-D integral of phi(t) Phi((y - rho t)/s) in 30-digit arithmetic."""
    s = mp.sqrt(1 - mp.mpf(rho) ** 2)
    f = lambda t: mp.npdf(t) * mp.ncdf((y - rho * t) / s)
    # the inner cdf switches over a width s around t = y / rho
    knots = [0.0]
    if abs(rho) > 1e-3:
        c = y / rho
        knots += [c + k * float(s) for k in (-8, -2, -0.5, 0, 0.5, 2, 8)]
    pts = [-mp.inf] + sorted(k for k in set(knots) if k < x) + [x]
    return float(mp.quad(f, pts))


def dblquad_bvn_cdf(x, y, rho):
    """Phi2 by adaptive 2-D quadrature of the density on a truncated box."""
    lo = -12.0
    s = math.sqrt(1 - rho * rho)

    def dens(v, u):
        return math.exp(-(u * u - 2 * rho * u * v + v * v) / (2 * s * s)) / (2 * math.pi * s)

    val, _ = integrate.dblquad(dens, lo, x, lo, y, epsabs=1e-13, epsrel=1e-13)
    return val


def rectangle_quad(lk, uk, ll, ul, rho):
    """P(lk < X <= uk, ll < Y <= ul) without using any Phi2 routine."""
    s = mp.sqrt(1 - mp.mpf(rho) ** 2)

    def inner(t):
        hi = mp.ncdf((ul - rho * t) / s) if math.isfinite(ul) else mp.mpf(1)
        lo = mp.ncdf((ll - rho * t) / s) if math.isfinite(ll) else mp.mpf(0)
        return mp.npdf(t) * (hi - lo)

    a = -mp.inf if math.isinf(lk) else lk
    b = mp.inf if math.isinf(uk) else uk
    return float(mp.quad(inner, [a, b]))


def mixed_quad(lk, uk, y, mean, sigma, rho):
    """Joint density of an interval for the latent k and an observed gaussian y."""
    e = (y - mean) / sigma
    s2 = 1 - rho * rho
    dens = lambda t: mp.exp(-(t * t - 2 * rho * t * e + e * e) / (2 * s2)) / (2 * mp.pi * mp.sqrt(s2))
    a = -mp.inf if math.isinf(lk) else lk
    b = mp.inf if math.isinf(uk) else uk
    return float(mp.quad(dens, [a, b])) / sigma


def bigauss_density(yk, yl, mk, ml, sk, sl, rho):
    cov = np.array([[sk * sk, rho * sk * sl], [rho * sk * sl, sl * sl]])
    return float(stats.multivariate_normal(mean=[mk, ml], cov=cov).pdf([yk, yl]))


def central_diff(f, z, h=1e-6):
    z = np.asarray(z, dtype=float)
    g = np.empty_like(z)
    for i in range(z.size):
        zp, zm = z.copy(), z.copy()
        zp[i] += h
        zm[i] -= h
        g[i] = (f(zp) - f(zm)) / (2 * h)
    return g


# ---------------------------------------------------------------------------
# random single-term problems: each returns (function of a flat vector, flat
# point, analytic gradient at that point)


def _ordinal_setup(rng, p):
    K = int(rng.integers(2, 6))
    theta = np.cumsum(np.concatenate([[rng.uniform(-1.5, 0.0)], rng.uniform(0.4, 1.2, K - 2)]))
    beta = rng.normal(scale=0.5, size=p)
    x = rng.normal(size=p)
    cat = int(rng.integers(1, K + 1))
    design = ExtendedDesign.build(cat, K, x)
    return np.concatenate([theta, beta]), design


def problem_uni_ordinal(rng):
    psi, design = _ordinal_setup(rng, int(rng.integers(0, 4)))
    f = lambda z: uni_ordinal(design.bounds(z), design).value
    return f, psi, uni_ordinal(design.bounds(psi), design).grad["psi"]


def problem_uni_gaussian(rng):
    p = int(rng.integers(0, 4))
    x_star = np.concatenate([[1.0], rng.normal(size=p)])
    beta = rng.normal(size=p + 1)
    sigma = rng.uniform(0.5, 2.0)
    y = float(beta @ x_star + sigma * rng.normal())
    f = lambda z: uni_gaussian(y, x_star, z[:-1], z[-1]).value
    t = uni_gaussian(y, x_star, beta, sigma)
    return f, np.concatenate([beta, [sigma]]), np.concatenate([t.grad["beta_star"], t.grad["sigma"]])


def problem_case1(rng):
    p = int(rng.integers(0, 4))
    psi_k, _ = _ordinal_setup(rng, p)
    psi_l, _ = _ordinal_setup(rng, p)
    # both designs share one covariate row
    x = rng.normal(size=p)
    dk = ExtendedDesign.build(int(rng.integers(1, psi_k.size - p + 2)), psi_k.size - p + 1, x)
    dl = ExtendedDesign.build(int(rng.integers(1, psi_l.size - p + 2)), psi_l.size - p + 1, x)
    rho = rng.uniform(-0.9, 0.9)
    a = psi_k.size

    def f(z):
        return case1_ord_ord(dk.bounds(z[:a]), dl.bounds(z[a:-1]), dk, dl, z[-1]).value

    t = case1_ord_ord(dk.bounds(psi_k), dl.bounds(psi_l), dk, dl, rho)
    point = np.concatenate([psi_k, psi_l, [rho]])
    return f, point, np.concatenate([t.grad["psi_k"], t.grad["psi_l"], t.grad["rho"]])


def problem_case2(rng):
    p = int(rng.integers(0, 4))
    x_star = np.concatenate([[1.0], rng.normal(size=p)])
    bk, bl = rng.normal(size=p + 1), rng.normal(size=p + 1)
    sk, sl = rng.uniform(0.5, 2.0, 2)
    rho = rng.uniform(-0.9, 0.9)
    yk = float(bk @ x_star + sk * rng.normal())
    yl = float(bl @ x_star + sl * rng.normal())
    m = p + 1

    def f(z):
        return case2_gauss_gauss(yk, yl, x_star, z[:m], z[m:2 * m], z[2 * m], z[2 * m + 1], z[2 * m + 2]).value

    t = case2_gauss_gauss(yk, yl, x_star, bk, bl, sk, sl, rho)
    point = np.concatenate([bk, bl, [sk, sl, rho]])
    g = t.grad
    return f, point, np.concatenate([g["beta_k_star"], g["beta_l_star"], g["sigma_k"], g["sigma_l"], g["rho"]])


def problem_case3(rng):
    p = int(rng.integers(0, 4))
    psi_k, _ = _ordinal_setup(rng, p)
    x = rng.normal(size=p)
    K = psi_k.size - p + 1
    dk = ExtendedDesign.build(int(rng.integers(1, K + 1)), K, x)
    x_star = np.concatenate([[1.0], x])
    bl = rng.normal(size=p + 1)
    sl = rng.uniform(0.5, 2.0)
    rho = rng.uniform(-0.9, 0.9)
    yl = float(bl @ x_star + sl * rng.normal())
    a, m = psi_k.size, p + 1

    def f(z):
        return case3_ord_gauss(dk.bounds(z[:a]), dk, yl, x_star, z[a:a + m], z[a + m], z[a + m + 1]).value

    t = case3_ord_gauss(dk.bounds(psi_k), dk, yl, x_star, bl, sl, rho)
    point = np.concatenate([psi_k, bl, [sl, rho]])
    g = t.grad
    return f, point, np.concatenate([g["psi_k"], g["beta_l_star"], g["sigma_l"], g["rho"]])


GRADIENT_BLOCKS = {
    "univariate ordinal": problem_uni_ordinal,
    "univariate gaussian": problem_uni_gaussian,
    "ordinal-ordinal": problem_case1,
    "gaussian-gaussian": problem_case2,
    "ordinal-gaussian": problem_case3,
}


def gradient_rel_error(problem, rng) -> float:
    f, point, analytic = problem(rng)
    fd = central_diff(f, point)
    return float(np.linalg.norm(analytic - fd) / max(np.linalg.norm(fd), 1e-12))


# ---------------------------------------------------------------------------
# random single-term instances with quadrature references


def _bounds_for(rng, K, cat):
    theta = np.sort(rng.uniform(-2.0, 2.0, K - 1))
    eta = rng.normal(scale=0.5)
    th = np.concatenate([[-np.inf], theta, [np.inf]])
    return th[cat - 1] - eta, th[cat] - eta, theta, eta


def instance_case1(rng):
    Kk, Kl = rng.integers(2, 6, 2)
    ck, cl = int(rng.integers(1, Kk + 1)), int(rng.integers(1, Kl + 1))
    lk, uk, *_ = _bounds_for(rng, Kk, ck)
    ll, ul, *_ = _bounds_for(rng, Kl, cl)
    rho = rng.uniform(-0.95, 0.95)
    dk = ExtendedDesign.build(ck, int(Kk), np.zeros(0))
    dl = ExtendedDesign.build(cl, int(Kl), np.zeros(0))
    term = case1_ord_ord(OrdinalBounds(lk, uk), OrdinalBounds(ll, ul), dk, dl, rho)
    return math.exp(-term.value), rectangle_quad(lk, uk, ll, ul, rho)


def instance_case2(rng):
    mk, ml = rng.normal(size=2)
    sk, sl = rng.uniform(0.5, 2.0, 2)
    rho = rng.uniform(-0.95, 0.95)
    yk, yl = mk + sk * rng.normal(), ml + sl * rng.normal()
    term = case2_gauss_gauss(yk, yl, [1.0], [mk], [ml], sk, sl, rho)
    return math.exp(-term.value), bigauss_density(yk, yl, mk, ml, sk, sl, rho)


def instance_case3(rng):
    K = int(rng.integers(2, 6))
    c = int(rng.integers(1, K + 1))
    lk, uk, *_ = _bounds_for(rng, K, c)
    ml, sl = rng.normal(), rng.uniform(0.5, 2.0)
    rho = rng.uniform(-0.95, 0.95)
    yl = ml + sl * rng.normal()
    d = ExtendedDesign.build(c, K, np.zeros(0))
    term = case3_ord_gauss(OrdinalBounds(lk, uk), d, yl, [1.0], [ml], sl, rho)
    return math.exp(-term.value), mixed_quad(lk, uk, yl, ml, sl, rho)


LIKELIHOOD_CASES = {
    "ordinal-ordinal": instance_case1,
    "gaussian-gaussian": instance_case2,
    "ordinal-gaussian": instance_case3,
}


def case1_category_sum(rng) -> float:
    """Sum of rectangle probabilities over every category pair."""
    Kk, Kl = (int(k) for k in rng.integers(2, 6, 2))
    tk, tl = np.sort(rng.uniform(-2, 2, Kk - 1)), np.sort(rng.uniform(-2, 2, Kl - 1))
    ek, el = rng.normal(scale=0.5, size=2)
    rho = rng.uniform(-0.95, 0.95)
    bk = np.concatenate([[-np.inf], tk, [np.inf]]) - ek
    bl = np.concatenate([[-np.inf], tl, [np.inf]]) - el
    total = 0.0
    for a in range(1, Kk + 1):
        for b in range(1, Kl + 1):
            t = case1_ord_ord(OrdinalBounds(bk[a - 1], bk[a]), OrdinalBounds(bl[b - 1], bl[b]),
                              ExtendedDesign.build(a, Kk, np.zeros(0)), ExtendedDesign.build(b, Kl, np.zeros(0)), rho)
            total += math.exp(-t.value)
    return total


def case3_category_sum(rng) -> float:
    """Sum over categories of the joint term divided by the gaussian density."""
    K = int(rng.integers(2, 6))
    th = np.concatenate([[-np.inf], np.sort(rng.uniform(-2, 2, K - 1)), [np.inf]]) - rng.normal(scale=0.5)
    ml, sl = rng.normal(), rng.uniform(0.5, 2.0)
    rho = rng.uniform(-0.95, 0.95)
    yl = ml + sl * rng.normal()
    dens = math.exp(-0.5 * ((yl - ml) / sl) ** 2) / (math.sqrt(2 * math.pi) * sl)
    total = 0.0
    for c in range(1, K + 1):
        t = case3_ord_gauss(OrdinalBounds(th[c - 1], th[c]), ExtendedDesign.build(c, K, np.zeros(0)),
                            yl, [1.0], [ml], sl, rho)
        total += math.exp(-t.value)
    return total / dens


def mp_bvn_tail(x, y, rho, dps=40):
    """Phi2 for tiny values: the same 1-D integral, rescaled by its peak, on panels
    graded by powers of two around the maximizer of the log-integrand."""
    with mp.workdps(dps):
        x, y, r = mp.mpf(x), mp.mpf(y), mp.mpf(rho)
        s = mp.sqrt(1 - r * r)
        log_f = lambda t: -t * t / 2 + mp.log(mp.ncdf((y - r * t) / s))

        def slope(t):
            z = (y - r * t) / s
            return -t - r / s * mp.npdf(z) / mp.ncdf(z)

        if slope(x) >= 0:
            top = x
        else:
            lo, hi = x - 1, x
            while slope(lo) < 0:
                lo = x - 2 * (x - lo)
            for _ in range(3 * dps):
                mid = (lo + hi) / 2
                lo, hi = (mid, hi) if slope(mid) >= 0 else (lo, mid)
            top = (lo + hi) / 2
        steps = [mp.mpf(2) ** e for e in range(8, -40, -1)]
        pts = sorted({top - d for d in steps} | {top + d for d in steps if top + d < x} | {top, x})
        peak = log_f(top)
        area = mp.quad(lambda t: mp.exp(log_f(t) - peak), [-mp.inf] + pts, maxdegree=8)
        return float(area * mp.exp(peak) / mp.sqrt(2 * mp.pi))
