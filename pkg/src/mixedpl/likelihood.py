"""Pairwise (composite) negative log-likelihood and its analytic gradient.

Every unit contributes the sum over pairs of observed responses of a
bivariate term, or a univariate term when it has exactly one observed
response. There are three bivariate cases: two ordinal responses (a
rectangle probability under the bivariate normal), two gaussian responses
(a bivariate normal density with scales) and one of each (conditional
interval probability times the gaussian density).

The vectorized ``*_kernel`` functions return values together with partial
derivatives in the natural coordinates of each case (interval bounds on the
latent scale, standardized gaussian residuals, rho). The public single-term
functions and ``unit_contributions`` push those partials through the
per-response designs into parameter gradients.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .data import Dataset, validate_dataset
from .gauss import bvn_cdf, bvn_cdf_dx, bvn_pdf, clamp_rho, std_normal_pdf
from .model import ModelSpec, ParameterSet, layout_for

PROB_FLOOR = 1e-300
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# vectorized kernels


def interval_prob(lower, upper):
    """Phi(upper) - Phi(lower), evaluated in the tail that avoids cancellation."""
    lower, upper = np.asarray(lower, dtype=float), np.asarray(upper, dtype=float)
    return np.where(lower > 0, ndtr(-lower) - ndtr(-upper), ndtr(upper) - ndtr(lower))


def _pdf_times(z, factor):
    """phi(z) * factor with the product taken as 0 where z is infinite."""
    fin = np.isfinite(z)
    zf = np.where(fin, z, 0.0)
    ff = np.where(fin, factor, 0.0)
    return np.where(fin, std_normal_pdf(zf) * ff, 0.0)


def ordinal_kernel(lower, upper):
    """-log(Phi(U) - Phi(L)) and its partials in (L, U)."""
    p = interval_prob(lower, upper)
    pf = np.maximum(p, PROB_FLOOR)
    value = -np.log(pf)
    d_upper = -std_normal_pdf(upper) / pf
    d_lower = std_normal_pdf(lower) / pf
    return value, d_lower, d_upper


def gaussian_kernel(resid, sigma):
    """Univariate normal neglog density of ``resid = y - mean`` with scale sigma.

    Returns the value, the partial in the standardized residual e = resid/sigma
    (holding sigma fixed), and e itself.
    """
    e = resid / sigma
    value = HALF_LOG_2PI + np.log(sigma) + 0.5 * e * e
    return value, e, e


def rectangle_kernel(lk, uk, ll, ul, rho):
    """-log P(lk < Xk <= uk, ll < Xl <= ul) for a standard bivariate normal.

    Returns ``value, d_lk, d_uk, d_ll, d_ul, d_rho``. Each coordinate is first
    reflected so that the rectangle sits in the lower tail, which keeps the
    four-term inclusion-exclusion free of cancellation when the mass is small.
    """
    lk, uk, ll, ul = (np.asarray(a, dtype=float) for a in (lk, uk, ll, ul))
    rho = clamp_rho(np.asarray(rho, dtype=float))
    with np.errstate(invalid="ignore"):  # (-inf, inf) sums to nan: no reflection
        fk = (lk + uk) > 0
        fl = (ll + ul) > 0
    Lk, Uk = np.where(fk, -uk, lk), np.where(fk, -lk, uk)
    Ll, Ul = np.where(fl, -ul, ll), np.where(fl, -ll, ul)
    sign = np.where(fk ^ fl, -1.0, 1.0)
    r = rho * sign

    p = bvn_cdf(Uk, Ul, r) - bvn_cdf(Lk, Ul, r) - bvn_cdf(Uk, Ll, r) + bvn_cdf(Lk, Ll, r)
    pf = np.maximum(p, PROB_FLOOR)
    value = -np.log(pf)

    dUk = bvn_cdf_dx(Uk, Ul, r) - bvn_cdf_dx(Uk, Ll, r)
    dLk = bvn_cdf_dx(Lk, Ll, r) - bvn_cdf_dx(Lk, Ul, r)
    dUl = bvn_cdf_dx(Ul, Uk, r) - bvn_cdf_dx(Ul, Lk, r)
    dLl = bvn_cdf_dx(Ll, Lk, r) - bvn_cdf_dx(Ll, Uk, r)
    dr = bvn_pdf(Uk, Ul, r) - bvn_pdf(Lk, Ul, r) - bvn_pdf(Uk, Ll, r) + bvn_pdf(Lk, Ll, r)

    # undo the reflection: reflected L = -u and U = -l
    d_uk = np.where(fk, -dLk, dUk)
    d_lk = np.where(fk, -dUk, dLk)
    d_ul = np.where(fl, -dLl, dUl)
    d_ll = np.where(fl, -dUl, dLl)
    return value, -d_lk / pf, -d_uk / pf, -d_ll / pf, -d_ul / pf, -dr * sign / pf


def bigauss_kernel(ek, el, sk, sl, rho):
    """Bivariate normal neglog density in standardized residuals ek, el.

    Includes the log(sigma_k sigma_l) Jacobian. Returns ``value, d_ek, d_el,
    d_rho`` with the partials in ek, el taken at fixed sigma.
    """
    rho = clamp_rho(np.asarray(rho, dtype=float))
    om = 1.0 - rho * rho
    A = ek * ek - 2.0 * rho * ek * el + el * el
    value = np.log(2.0 * math.pi) + np.log(sk) + np.log(sl) + 0.5 * np.log(om) + A / (2.0 * om)
    d_ek = (ek - rho * el) / om
    d_el = (el - rho * ek) / om
    d_rho = -rho / om + rho * A / (om * om) - ek * el / om
    return value, d_ek, d_el, d_rho


def mixed_kernel(lk, uk, el, sl, rho):
    """Ordinal k with latent bounds (lk, uk] jointly with gaussian residual el.

    value = -log(Phi(eta_u) - Phi(eta_l)) + log(sqrt(2 pi) sl) + el^2 / 2,
    eta = (bound - rho el) / sqrt(1 - rho^2). Returns ``value, d_lk, d_uk,
    d_el, d_rho`` with d_el at fixed sigma (includes the gaussian part).
    """
    lk, uk = np.asarray(lk, dtype=float), np.asarray(uk, dtype=float)
    rho = clamp_rho(np.asarray(rho, dtype=float))
    s = np.sqrt(1.0 - rho * rho)
    eta_u = (uk - rho * el) / s
    eta_l = (lk - rho * el) / s
    p = interval_prob(eta_l, eta_u)
    pf = np.maximum(p, PROB_FLOOR)
    value = -np.log(pf) + HALF_LOG_2PI + np.log(sl) + 0.5 * el * el

    phu = std_normal_pdf(eta_u)
    phl = std_normal_pdf(eta_l)
    d_uk = -phu / (s * pf)
    d_lk = phl / (s * pf)
    d_el = rho * (phu - phl) / (s * pf) + el
    deta_u = -el / s + rho * np.where(np.isfinite(eta_u), eta_u, 0.0) / (s * s)
    deta_l = -el / s + rho * np.where(np.isfinite(eta_l), eta_l, 0.0) / (s * s)
    d_rho = -(_pdf_times(eta_u, deta_u) - _pdf_times(eta_l, deta_l)) / pf
    return value, d_lk, d_uk, d_el, d_rho


# ---------------------------------------------------------------------------
# single-term API


@dataclass(frozen=True)
class OrdinalBounds:
    lower: float
    upper: float

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError(f"lower bound {self.lower} must be below upper bound {self.upper}")


@dataclass(frozen=True, eq=False)
class ExtendedDesign:
    """Rows x_upper, x_lower with psi @ x_upper = U and psi @ x_lower = L.

    ``psi = (theta_1..theta_{K-1}, beta)``. An open end (category 1 below,
    category K above) is flagged and its row is all zeros.
    """

    x_upper: np.ndarray
    x_lower: np.ndarray
    has_upper: bool
    has_lower: bool

    @classmethod
    def build(cls, category: int, n_categories: int, x) -> ExtendedDesign:
        x = np.asarray(x, dtype=float).ravel()
        k1 = n_categories - 1
        if not 1 <= category <= n_categories:
            raise ValueError(f"category {category} outside 1..{n_categories}")
        up = np.zeros(k1 + x.size)
        lo = np.zeros(k1 + x.size)
        has_up = category <= k1
        has_lo = category >= 2
        if has_up:
            up[category - 1] = 1.0
            up[k1:] = -x
        if has_lo:
            lo[category - 2] = 1.0
            lo[k1:] = -x
        return cls(up, lo, has_up, has_lo)

    def bounds(self, psi) -> OrdinalBounds:
        psi = np.asarray(psi, dtype=float)
        upper = float(psi @ self.x_upper) if self.has_upper else math.inf
        lower = float(psi @ self.x_lower) if self.has_lower else -math.inf
        return OrdinalBounds(lower, upper)


@dataclass(frozen=True, eq=False)
class PairTerm:
    """A negative log-likelihood contribution and its gradient blocks."""

    value: float
    grad: dict[str, np.ndarray]


def _f(a) -> float:
    return float(np.asarray(a).reshape(-1)[0])


def uni_ordinal(bounds: OrdinalBounds, design: ExtendedDesign) -> PairTerm:
    value, dl, du = ordinal_kernel(bounds.lower, bounds.upper)
    grad = _f(du) * design.x_upper + _f(dl) * design.x_lower
    return PairTerm(_f(value), {"psi": grad})


def uni_gaussian(y: float, x_star, beta_star, sigma: float) -> PairTerm:
    x_star = np.asarray(x_star, dtype=float)
    resid = y - float(np.dot(beta_star, x_star))
    value, de, e = gaussian_kernel(resid, sigma)
    return PairTerm(float(value), {
        "beta_star": -de / sigma * x_star,
        "sigma": np.array([1.0 / sigma - de * e / sigma]),
    })


def case1_ord_ord(bounds_k: OrdinalBounds, bounds_l: OrdinalBounds,
                  design_k: ExtendedDesign, design_l: ExtendedDesign, rho: float) -> PairTerm:
    value, dlk, duk, dll, dul, dr = (
        _f(a) for a in rectangle_kernel(bounds_k.lower, bounds_k.upper, bounds_l.lower, bounds_l.upper, rho)
    )
    return PairTerm(value, {
        "psi_k": duk * design_k.x_upper + dlk * design_k.x_lower,
        "psi_l": dul * design_l.x_upper + dll * design_l.x_lower,
        "rho": np.array([dr]),
    })


def case2_gauss_gauss(y_k: float, y_l: float, x_star, beta_k_star, beta_l_star,
                      sigma_k: float, sigma_l: float, rho: float) -> PairTerm:
    x_star = np.asarray(x_star, dtype=float)
    ek = (y_k - float(np.dot(beta_k_star, x_star))) / sigma_k
    el = (y_l - float(np.dot(beta_l_star, x_star))) / sigma_l
    value, dek, del_, dr = (_f(a) for a in bigauss_kernel(ek, el, sigma_k, sigma_l, rho))
    return PairTerm(value, {
        "beta_k_star": -dek / sigma_k * x_star,
        "beta_l_star": -del_ / sigma_l * x_star,
        "sigma_k": np.array([1.0 / sigma_k - dek * ek / sigma_k]),
        "sigma_l": np.array([1.0 / sigma_l - del_ * el / sigma_l]),
        "rho": np.array([dr]),
    })


def case3_ord_gauss(bounds_k: OrdinalBounds, design_k: ExtendedDesign, y_l: float, x_star,
                    beta_l_star, sigma_l: float, rho: float) -> PairTerm:
    x_star = np.asarray(x_star, dtype=float)
    el = (y_l - float(np.dot(beta_l_star, x_star))) / sigma_l
    value, dlk, duk, de, dr = (
        _f(a) for a in mixed_kernel(bounds_k.lower, bounds_k.upper, el, sigma_l, rho)
    )
    return PairTerm(value, {
        "psi_k": duk * design_k.x_upper + dlk * design_k.x_lower,
        "beta_l_star": -de / sigma_l * x_star,
        "sigma_l": np.array([1.0 / sigma_l - de * el / sigma_l]),
        "rho": np.array([dr]),
    })


# ---------------------------------------------------------------------------
# full pairwise likelihood


@dataclass(frozen=True, eq=False)
class Contributions:
    """Per-unit negative log-likelihood values and score rows."""

    values: np.ndarray
    scores: np.ndarray
    n_empty: int

    @property
    def total(self) -> float:
        return float(np.sum(self.values))

    @property
    def gradient(self) -> np.ndarray:
        return np.sum(self.scores, axis=0)


class _Response:
    """Per-evaluation quantities for one response column."""

    def __init__(self, j, spec, params, lay, data):
        r = spec.responses[j]
        self.j = j
        self.ordinal = r.is_ordinal
        self.obs = data.observed_mask[:, j]
        eta = data.x @ params.coefficients.reshape(spec.q, spec.p)[j] if spec.p else np.zeros(data.n)
        self.coef_cols = lay.coef[j]
        if self.ordinal:
            th = np.concatenate([[-np.inf], params.thresholds[r.name], [np.inf]])
            cat = np.where(self.obs, data.y[:, j], 1).astype(int)
            self.cat = cat
            self.K = r.n_categories
            self.upper = th[cat] - eta
            self.lower = th[cat - 1] - eta
            self.theta_cols = lay.theta[j]
        else:
            self.sigma = params.scales[r.name]
            mean = params.intercepts[r.name] + eta
            self.e = np.where(self.obs, data.y[:, j] - mean, 0.0) / self.sigma
            self.intercept_col = lay.intercept[j]
            self.sigma_col = lay.sigma[j]

    def scatter_ordinal(self, S, rows, x, d_lower, d_upper):
        cat = self.cat[rows]
        has_up = cat <= self.K - 1
        has_lo = cat >= 2
        S[rows[has_up], self.theta_cols[cat[has_up] - 1]] += d_upper[has_up]
        S[rows[has_lo], self.theta_cols[cat[has_lo] - 2]] += d_lower[has_lo]
        if self.coef_cols.size:
            S[rows[:, None], self.coef_cols[None, :]] -= (d_upper + d_lower)[:, None] * x[rows]

    def scatter_gaussian(self, S, rows, x, d_e):
        g_mean = -d_e / self.sigma
        S[rows, self.intercept_col] += g_mean
        if self.coef_cols.size:
            S[rows[:, None], self.coef_cols[None, :]] += g_mean[:, None] * x[rows]
        S[rows, self.sigma_col] += 1.0 / self.sigma - d_e * self.e[rows] / self.sigma


def _contributions(params: ParameterSet, data: Dataset, spec: ModelSpec) -> Contributions:
    lay = layout_for(spec)
    n, d = data.n, lay.size
    values = np.zeros(n)
    S = np.zeros((n, d))
    resp = [_Response(j, spec, params, lay, data) for j in range(spec.q)]
    n_obs = data.observed_mask.sum(axis=1)

    for pair_no, (k, l) in enumerate(spec.pairs):
        rows = np.flatnonzero(data.observed_mask[:, k] & data.observed_mask[:, l])
        if rows.size == 0:
            continue
        a, b = resp[k], resp[l]
        rho = params.correlations[pair_no]
        rho_col = lay.rho[pair_no]
        if a.ordinal and b.ordinal:
            v, dlk, duk, dll, dul, dr = rectangle_kernel(
                a.lower[rows], a.upper[rows], b.lower[rows], b.upper[rows], rho)
            a.scatter_ordinal(S, rows, data.x, dlk, duk)
            b.scatter_ordinal(S, rows, data.x, dll, dul)
        elif not a.ordinal and not b.ordinal:
            v, dek, del_, dr = bigauss_kernel(a.e[rows], b.e[rows], a.sigma, b.sigma, rho)
            a.scatter_gaussian(S, rows, data.x, dek)
            b.scatter_gaussian(S, rows, data.x, del_)
        else:
            o, g = (a, b) if a.ordinal else (b, a)
            v, dlo, duo, de, dr = mixed_kernel(o.lower[rows], o.upper[rows], g.e[rows], g.sigma, rho)
            o.scatter_ordinal(S, rows, data.x, dlo, duo)
            g.scatter_gaussian(S, rows, data.x, de)
        values[rows] += v
        S[rows, rho_col] += dr

    single = n_obs == 1
    if single.any():
        for rj in resp:
            rows = np.flatnonzero(single & rj.obs)
            if rows.size == 0:
                continue
            if rj.ordinal:
                v, dl, du = ordinal_kernel(rj.lower[rows], rj.upper[rows])
                rj.scatter_ordinal(S, rows, data.x, dl, du)
            else:
                v, de, _ = gaussian_kernel(rj.e[rows] * rj.sigma, rj.sigma)
                rj.scatter_gaussian(S, rows, data.x, de)
            values[rows] += v

    return Contributions(values, S, int(np.sum(n_obs == 0)))


def unit_contributions(params: ParameterSet, data: Dataset, spec: ModelSpec,
                       threads: int = 1) -> Contributions:
    """Per-unit values and scores; units are split into chunks across threads."""
    params.validate(spec)
    validate_dataset(data, spec)
    return evaluate(params, data, spec, threads)


def evaluate(params: ParameterSet, data: Dataset, spec: ModelSpec, threads: int = 1) -> Contributions:
    """Unchecked variant of ``unit_contributions`` for inner loops."""
    threads = max(1, int(threads))
    if threads == 1 or data.n < 2 * threads:
        return _contributions(params, data, spec)
    chunks = np.array_split(np.arange(data.n), threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda rows: _contributions(params, data.subset(rows), spec), chunks))
    return Contributions(
        np.concatenate([c.values for c in parts]),
        np.concatenate([c.scores for c in parts]),
        sum(c.n_empty for c in parts),
    )


def pairwise_neglog(params: ParameterSet, data: Dataset, spec: ModelSpec,
                    threads: int = 1) -> tuple[float, np.ndarray]:
    """Negative pairwise log-likelihood and its gradient in the constrained layout."""
    c = unit_contributions(params, data, spec, threads)
    return c.total, c.gradient


def per_unit_scores(params: ParameterSet, data: Dataset, spec: ModelSpec,
                    threads: int = 1) -> np.ndarray:
    return unit_contributions(params, data, spec, threads).scores
