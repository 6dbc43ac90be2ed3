"""Univariate and bivariate standard normal kernels.

All functions broadcast over numpy arrays and return a Python float when
every argument is a scalar. Infinite arguments are resolved to their exact
limits rather than evaluated numerically.

The bivariate CDF uses the Drezner-Wesolowsky / Genz decomposition: an
arcsine-substituted Gauss-Legendre rule for moderate correlations and the
complementary asymptotic expansion for ``|rho| >= 0.925``. Those rules are
accurate in absolute terms only, so values below ``TAIL_SWITCH`` are
recomputed from a one-dimensional integral with a positive, log-concave
integrand, which keeps the relative error small deep in the lower tail.
"""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from scipy.special import log_ndtr, ndtr

RHO_EPS = 1e-10
TAIL_SWITCH = 1e-3
_TAIL_DROP = 40.0  # integration window keeps all but exp(-40) of the mass
_TAIL_X, _TAIL_W = np.polynomial.legendre.leggauss(20)
_TAIL_MAX_LEVELS = 60
_TWO_PI = 2.0 * math.pi
_INV_SQRT_2PI = 1.0 / math.sqrt(_TWO_PI)

# 20-point Gauss-Legendre rule on [-1, 1], positive half.
_GL_X = np.array([
    0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
    0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
    0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
    0.07652652113349733,
])
_GL_W = np.array([
    0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
    0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
    0.1316886384491766, 0.1420961093183821, 0.1491729864726037,
    0.1527533871307259,
])
# Nodes mapped to [0, 2]; the rule integrates over half the interval.
_NODES = np.concatenate([1.0 - _GL_X, 1.0 + _GL_X])
_WEIGHTS = np.concatenate([_GL_W, _GL_W])


class BivariateArgs(NamedTuple):
    """Standardized coordinates and correlation of a bivariate normal."""

    x: float
    y: float
    rho: float


def _out(a):
    a = np.asarray(a)
    return float(a) if a.ndim == 0 else a


def clamp_rho(rho):
    return np.clip(rho, -1.0 + RHO_EPS, 1.0 - RHO_EPS)


def std_normal_pdf(x):
    """Standard normal density; zero at +-inf."""
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore"):
        return _out(_INV_SQRT_2PI * np.exp(-0.5 * x * x))


def std_normal_cdf(x):
    """Standard normal CDF (Cephes ``ndtr``)."""
    return _out(ndtr(np.asarray(x, dtype=float)))


def _bvn_upper(h, k, r):
    """P(X > h, Y > k) for finite 1-d arrays h, k and 0 <= |r| < 1."""
    out = np.empty_like(h)
    hk = h * k
    moderate = np.abs(r) < 0.925

    if moderate.any():
        hm, km, hkm = h[moderate], k[moderate], hk[moderate]
        hs = 0.5 * (hm * hm + km * km)
        asr = 0.5 * np.arcsin(r[moderate])
        sn = np.sin(asr[:, None] * _NODES)
        terms = np.exp((sn * hkm[:, None] - hs[:, None]) / (1.0 - sn * sn))
        out[moderate] = (terms @ _WEIGHTS) * asr / _TWO_PI + ndtr(-hm) * ndtr(-km)

    high = ~moderate
    if high.any():
        hh, rh = h[high], r[high]
        neg = rh < 0
        kh = np.where(neg, -k[high], k[high])
        hkh = np.where(neg, -hk[high], hk[high])

        as_ = (1.0 - rh) * (1.0 + rh)
        a = np.sqrt(as_)
        bs = (hh - kh) ** 2
        c = (4.0 - hkh) / 8.0
        d = (12.0 - hkh) / 16.0
        bvn = a * np.exp(-0.5 * (bs / as_ + hkh)) * (
            1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as_ * as_ / 5.0
        )
        ok = hkh > -160.0
        b = np.sqrt(bs)
        tail = (
            np.exp(-0.5 * np.where(ok, hkh, 0.0)) * math.sqrt(_TWO_PI) * ndtr(-b / a)
            * b * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0)
        )
        bvn = bvn - np.where(ok, tail, 0.0)

        a2 = 0.5 * a
        xs = (a2[:, None] * _NODES) ** 2
        rs = np.sqrt(1.0 - xs)
        bs_, hk_, c_, d_ = bs[:, None], hkh[:, None], c[:, None], d[:, None]
        terms = (
            np.exp(-bs_ / (2.0 * xs) - hk_ / (1.0 + rs)) / rs
            - np.exp(-0.5 * (bs_ / xs + hk_)) * (1.0 + c_ * xs * (1.0 + d_ * xs))
        )
        bvn = -(bvn + a2 * (terms @ _WEIGHTS)) / _TWO_PI

        pos_val = bvn + ndtr(-np.maximum(hh, kh))
        gap = np.where(hh < 0, ndtr(kh) - ndtr(hh), ndtr(-hh) - ndtr(-kh))
        neg_val = np.where(kh > hh, gap - bvn, -bvn)
        out[high] = np.where(rh > 0, pos_val, neg_val)

    return np.clip(out, 0.0, 1.0)


def _tail_log_integrand(t, y, r, s):
    # log of phi(t) * Phi((y - r t) / s) and its derivative in t
    z = (y - r * t) / s
    lc = log_ndtr(z)
    mills = np.exp(-0.5 * z * z - 0.5 * math.log(_TWO_PI) - lc)
    return -0.5 * t * t - 0.5 * math.log(_TWO_PI) + lc, -t - (r / s) * mills


def _bisect(fn, lo, hi, iters):
    """Root of a function decreasing on each [lo, hi] (fn(lo) >= 0 >= fn(hi))."""
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        pos = fn(mid) >= 0
        lo, hi = np.where(pos, mid, lo), np.where(pos, hi, mid)
    return 0.5 * (lo + hi)


def _bvn_lower_tail(x, y, r):
    """Phi2(x, y; r) for finite x, y as the integral over t <= x of phi(t) Phi((y - r t)/s).

    The log-integrand is concave, so its maximizer is found by bisection on the
    derivative and the window where it lies within ``_TAIL_DROP`` of the
    maximum by bisection on each side. Neither needs to be exact: they only
    place the quadrature panels.
    """
    s = np.sqrt(1.0 - r * r)
    col = lambda v, t: v if np.ndim(t) < 2 else v[:, None]
    F = lambda t: _tail_log_integrand(t, col(y, t), col(r, t), col(s, t))[0]
    dF = lambda t: _tail_log_integrand(t, y, r, s)[1]

    # maximizer on (-inf, x]; F' is decreasing and positive far to the left
    lo = x - 1.0
    for _ in range(60):
        bad = dF(lo) < 0
        if not bad.any():
            break
        lo = np.where(bad, x - 2.0 * (x - lo), lo)
    interior = dF(x) < 0
    t_star = np.where(interior, _bisect(dF, lo, np.where(interior, x, lo + 1.0), 40), x)
    f_star = F(t_star)

    # F drops at least quadratically (curvature <= -1) away from t_star
    reach = math.sqrt(2.0 * _TAIL_DROP) + 1.0
    drop = lambda t: F(t) - (f_star - _TAIL_DROP)
    a = _bisect(drop, t_star, t_star - reach, 20)
    b = np.where(interior, np.minimum(x, _bisect(lambda t: -drop(t), t_star + reach, t_star, 20)), x)

    # Curvature concentrates at the peak and where the inner cdf switches off
    # (z = 0, over a width s / |r|). Panels are graded geometrically towards
    # both points so each is resolved at its own scale.
    z = (y - r * t_star) / s
    mills = np.exp(-0.5 * z * z - 0.5 * math.log(_TWO_PI) - log_ndtr(z))
    # mills * (z + mills) lies in (0, 1) but cancels for very negative z
    width = 1.0 / np.sqrt(1.0 + (r / s) ** 2 * np.clip(mills * (z + mills), 0.0, 1.0))
    width = np.minimum(width, s / np.maximum(np.abs(r), 1e-300))
    with np.errstate(divide="ignore", over="ignore"):
        switch = np.clip(np.where(r != 0, y / np.where(r != 0, r, 1.0), a), a, b)
    c1, c2 = np.minimum(t_star, switch), np.maximum(t_star, switch)
    total = np.zeros_like(x)
    for u, v in ((a, c1), (c1, c2), (c2, b)):
        mid = 0.5 * (u + v)
        for end in (u, v):
            total += _graded_panels(F, f_star, end, mid, width)
    return np.exp(f_star) * total


def _graded_panels(F, f_star, end, far, width):
    """Integral of exp(F - f_star) between end and far, on panels refined towards end."""
    length = np.abs(far - end)
    if not length.any():
        return np.zeros_like(end)
    with np.errstate(divide="ignore"):
        levels = np.clip(np.ceil(np.log2(length / width)), 0, _TAIL_MAX_LEVELS)
    sign = np.sign(far - end)
    out = np.zeros_like(end)
    # per-row panels [0, 2^-L], [2^-L, 2^-L+1], ..., [1/2, 1] so a value does
    # not depend on the other entries of the batch
    for j in range(int(levels.max()) + 1):
        active = j <= levels
        g1 = np.where(active, 2.0 ** (j - levels), 0.0)
        g0 = np.where(active & (j > 0), 0.5 * g1, 0.0)
        p0 = end + sign * length * g0
        half = 0.5 * sign * length * (g1 - g0)
        nodes = p0[:, None] + half[:, None] * (_TAIL_X + 1.0)
        out += np.abs(half) * (np.exp(F(nodes) - f_star[:, None]) @ _TAIL_W)
    return out


def bvn_cdf(x, y, rho):
    """Bivariate standard normal CDF Phi2(x, y; rho).

    ``rho`` is clamped to ``[-1 + 1e-10, 1 - 1e-10]``.
    """
    x, y, rho = np.broadcast_arrays(
        np.asarray(x, dtype=float), np.asarray(y, dtype=float), np.asarray(rho, dtype=float)
    )
    shape = x.shape
    x, y, r = x.ravel(), y.ravel(), clamp_rho(rho.ravel())
    out = np.empty_like(x)

    finite = np.isfinite(x) & np.isfinite(y)
    if finite.any():
        out[finite] = _bvn_upper(-x[finite], -y[finite], r[finite])
        tail = finite & (out < TAIL_SWITCH)
        if tail.any():
            out[tail] = _bvn_lower_tail(x[tail], y[tail], r[tail])
    inf = ~finite
    if inf.any():
        xi, yi = x[inf], y[inf]
        val = np.where(xi == np.inf, ndtr(yi), np.where(yi == np.inf, ndtr(xi), 0.0))
        val = np.where((xi == -np.inf) | (yi == -np.inf), 0.0, val)
        out[inf] = val
    return _out(out.reshape(shape))


def bvn_pdf(x, y, rho):
    """Bivariate standard normal density; zero when either coordinate is infinite."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    r = clamp_rho(np.asarray(rho, dtype=float))
    om = 1.0 - r * r
    finite = np.isfinite(x) & np.isfinite(y)
    xf, yf = np.where(finite, x, 0.0), np.where(finite, y, 0.0)
    q = (xf * xf - 2.0 * r * xf * yf + yf * yf) / (2.0 * om)
    val = np.exp(-q) / (_TWO_PI * np.sqrt(om))
    return _out(np.where(finite, val, 0.0))


def bvn_cdf_dx(x, y, rho):
    """Partial derivative of Phi2(x, y; rho) in its first argument.

    Equals ``phi(x) * Phi((y - rho x) / sqrt(1 - rho^2))``.
    """
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    r = clamp_rho(np.asarray(rho, dtype=float))
    xfin = np.isfinite(x)
    xf = np.where(xfin, x, 0.0)
    with np.errstate(invalid="ignore"):
        arg = (y - r * xf) / np.sqrt(1.0 - r * r)
    # y = +-inf gives arg = +-inf, which ndtr resolves exactly
    val = _INV_SQRT_2PI * np.exp(-0.5 * xf * xf) * ndtr(arg)
    return _out(np.where(xfin, val, 0.0))


def bvn_cdf_drho(x, y, rho):
    """Partial derivative of Phi2(x, y; rho) in rho, which is the density phi2."""
    return bvn_pdf(x, y, rho)
