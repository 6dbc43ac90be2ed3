"""Maximum pairwise-likelihood fitting and sandwich inference."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize
from scipy.special import ndtr, ndtri

from .data import DataError, Dataset, validate_dataset
from .likelihood import evaluate
from .model import ModelSpec, ParameterSet, decode, encode, layout_for

COND_LIMIT = 1e12
POLISH_FACTOR = 1e-3
R_EIGEN_WARN = 1e-8
SOLVERS = {"bfgs": "BFGS", "quasi-newton-bfgs": "BFGS", "cg": "CG", "conjugate-gradient": "CG"}


class SingularSensitivityError(np.linalg.LinAlgError):
    def __init__(self, cond: float):
        self.cond = cond
        super().__init__(f"sensitivity matrix is numerically singular (condition number {cond:.3g})")


class EstimationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class FitConfig:
    solver: str = "bfgs"
    max_iterations: int = 2000
    gradient_tolerance: float | None = None  # None: 1e-5 * max(1, |objective|)
    compute_se: bool = True
    seed: int = 0
    threads: int = 1
    newton_steps: int = 20

    def __post_init__(self):
        if self.solver.lower() not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}; choose from {sorted(SOLVERS)}")
        if self.max_iterations <= 0:
            raise ValueError("max_iterations must be positive")
        if self.gradient_tolerance is not None and not self.gradient_tolerance > 0:
            raise ValueError("gradient_tolerance must be positive")

    def tolerance(self, objective: float) -> float:
        if self.gradient_tolerance is not None:
            return self.gradient_tolerance
        return 1e-5 * max(1.0, abs(objective))


@dataclass(frozen=True, eq=False)
class FitResult:
    spec: ModelSpec
    estimates: ParameterSet
    names: tuple[str, ...]
    estimate_vector: np.ndarray
    se: np.ndarray | None
    vcov: np.ndarray | None
    log_pl: float
    claic: float
    clbic: float
    n_units: int
    converged: bool
    iterations: int
    min_eigen_R: float
    gradient_norm: float
    n_empty_units: int = 0
    solver: str = "bfgs"
    message: str = ""
    formula: str = ""
    standardization: dict | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def clean(a):
            if a is None:
                return None
            arr = np.asarray(a, dtype=float)
            out = np.where(np.isfinite(arr), arr, np.nan).tolist()
            return _nan_to_none(out)

        return {
            "format": "mixedpl-fit/1",
            "formula": self.formula,
            "spec": self.spec.to_dict(),
            "standardization": (
                {k: list(v) for k, v in self.standardization.items()} if self.standardization else None
            ),
            "parameters": self.estimates.to_dict(self.spec),
            "names": list(self.names),
            "estimates": clean(self.estimate_vector),
            "se": clean(self.se),
            "vcov": clean(self.vcov),
            "log_pl": _finite_or_none(self.log_pl),
            "claic": _finite_or_none(self.claic),
            "clbic": _finite_or_none(self.clbic),
            "n_units": self.n_units,
            "n_empty_units": self.n_empty_units,
            "converged": self.converged,
            "iterations": self.iterations,
            "min_eigen_R": _finite_or_none(self.min_eigen_R),
            "gradient_norm": _finite_or_none(self.gradient_norm),
            "solver": self.solver,
            "message": self.message,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> FitResult:
        if d.get("format") != "mixedpl-fit/1":
            raise ValueError("not a fit result document (missing or wrong 'format')")
        spec = ModelSpec.from_dict(d["spec"])
        est = np.array(_none_to_nan(d["estimates"]), dtype=float)
        lay = layout_for(spec)
        if est.shape != (lay.size,):
            raise ValueError("estimate vector does not match the model layout")

        def arr(key, shape):
            if d.get(key) is None:
                return None
            a = np.array(_none_to_nan(d[key]), dtype=float)
            if a.shape != shape:
                raise ValueError(f"{key!r} has shape {a.shape}, expected {shape}")
            return a

        std = d.get("standardization")
        return cls(
            spec=spec,
            estimates=lay.from_vector(est),
            names=tuple(d["names"]),
            estimate_vector=est,
            se=arr("se", (lay.size,)),
            vcov=arr("vcov", (lay.size, lay.size)),
            log_pl=_none_to_nan(d["log_pl"]),
            claic=_none_to_nan(d["claic"]),
            clbic=_none_to_nan(d["clbic"]),
            n_units=int(d["n_units"]),
            n_empty_units=int(d.get("n_empty_units", 0)),
            converged=bool(d["converged"]),
            iterations=int(d["iterations"]),
            min_eigen_R=_none_to_nan(d["min_eigen_R"]),
            gradient_norm=_none_to_nan(d["gradient_norm"]),
            solver=d.get("solver", "bfgs"),
            message=d.get("message", ""),
            formula=d.get("formula", ""),
            standardization={k: tuple(v) for k, v in std.items()} if std else None,
        )

    @classmethod
    def from_json(cls, text: str) -> FitResult:
        return cls.from_dict(json.loads(text))


def _finite_or_none(x):
    return float(x) if x is not None and math.isfinite(x) else None


def _nan_to_none(obj):
    if isinstance(obj, list):
        return [_nan_to_none(o) for o in obj]
    return None if isinstance(obj, float) and math.isnan(obj) else obj


def _none_to_nan(obj):
    if isinstance(obj, list):
        return [_none_to_nan(o) for o in obj]
    return math.nan if obj is None else obj


# ---------------------------------------------------------------------------
# objective in the unconstrained space


def unconstrained_objective(spec: ModelSpec, data: Dataset, threads: int = 1) -> Callable[[np.ndarray], tuple[float, np.ndarray]]:
    lay = layout_for(spec)

    def fun(u):
        v = lay.from_unconstrained(u)
        c = evaluate(lay.from_vector(v), data, spec, threads)
        return c.total, lay.chain_rule(c.gradient, v)

    return fun


def _fd_jacobian(grad: Callable[[np.ndarray], np.ndarray], z: np.ndarray, rel_step: float = 1e-5) -> np.ndarray:
    d = z.size
    J = np.empty((d, d))
    for i in range(d):
        h = rel_step * max(1.0, abs(z[i]))
        zp, zm = z.copy(), z.copy()
        zp[i] += h
        zm[i] -= h
        J[:, i] = (grad(zp) - grad(zm)) / (2.0 * h)
    return 0.5 * (J + J.T)


def _newton(fun, u, tol: Callable[[float], float], max_steps: int):
    """Damped Newton with an eigenvalue-modified finite-difference Hessian."""
    f, g = fun(u)
    steps = 0
    while steps < max_steps and np.linalg.norm(g) > tol(f):
        H = _fd_jacobian(lambda z: fun(z)[1], u)
        w, V = np.linalg.eigh(H)
        floor = 1e-8 * max(1.0, np.max(np.abs(w)))
        w = np.maximum(np.abs(w), floor)
        step = -V @ ((V.T @ g) / w)
        slope = g @ step
        t = 1.0
        while t > 1e-10:
            f_new, g_new = fun(u + t * step)
            if np.isfinite(f_new) and f_new <= f + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            break
        u, f, g = u + t * step, f_new, g_new
        steps += 1
    return u, f, g, steps


# ---------------------------------------------------------------------------
# starting values


def _ordinal_start(spec: ModelSpec, data: Dataset, j: int) -> tuple[np.ndarray, np.ndarray]:
    r = spec.responses[j]
    rows = data.observed_mask[:, j]
    cats = data.y[rows, j].astype(int)
    counts = np.bincount(cats, minlength=r.n_categories + 1)[1:] + 0.5
    theta = ndtri(np.cumsum(counts)[:-1] / counts.sum())
    sub_spec = ModelSpec((r,), spec.covariates)
    sub = Dataset.from_arrays(data.y[rows, j:j + 1], data.x[rows])
    start = ParameterSet({r.name: theta}, np.zeros((1, spec.p)), {}, {}, [])
    u, *_ = _newton(unconstrained_objective(sub_spec, sub), encode(start, sub_spec),
                    tol=lambda f: 1e-6 * max(1.0, abs(f)), max_steps=8)
    est = decode(u, sub_spec)
    return est.thresholds[r.name], est.coefficients[0]


def initial_values(spec: ModelSpec, data: Dataset) -> ParameterSet:
    """Marginal fits per response, then correlations of (generalized) residuals."""
    q, p = spec.q, spec.p
    coef = np.zeros((q, p))
    thresholds, intercepts, scales = {}, {}, {}
    resid = np.full((data.n, q), np.nan)
    for j, r in enumerate(spec.responses):
        rows = data.observed_mask[:, j]
        if r.is_ordinal:
            th, beta = _ordinal_start(spec, data, j)
            thresholds[r.name] = th
            coef[j] = beta
            eta = data.x[rows] @ beta if p else np.zeros(rows.sum())
            bounds = np.concatenate([[-np.inf], th, [np.inf]])
            cats = data.y[rows, j].astype(int)
            lo, up = bounds[cats - 1] - eta, bounds[cats] - eta
            prob = np.maximum(ndtr(up) - ndtr(lo), 1e-300)
            phi = lambda z: np.where(np.isfinite(z), np.exp(-0.5 * np.where(np.isfinite(z), z, 0) ** 2), 0.0)
            resid[rows, j] = (phi(lo) - phi(up)) / math.sqrt(2 * math.pi) / prob
        else:
            X1 = np.column_stack([np.ones(rows.sum()), data.x[rows]])
            beta, *_ = np.linalg.lstsq(X1, data.y[rows, j], rcond=None)
            e = data.y[rows, j] - X1 @ beta
            sigma = math.sqrt(np.mean(e * e)) if e.size else 1.0
            intercepts[r.name] = beta[0]
            coef[j] = beta[1:]
            scales[r.name] = sigma if sigma > 0 else 1.0
            resid[rows, j] = e / scales[r.name]
    rho = []
    for k, l in spec.pairs:
        both = data.observed_mask[:, k] & data.observed_mask[:, l]
        if both.sum() < 3:
            rho.append(0.0)
            continue
        a, b = resid[both, k], resid[both, l]
        sa, sb = a.std(), b.std()
        c = np.mean((a - a.mean()) * (b - b.mean())) / (sa * sb) if sa > 0 and sb > 0 else 0.0
        rho.append(float(np.clip(c, -0.9, 0.9)))
    return ParameterSet(thresholds, coef, intercepts, scales, rho)


# ---------------------------------------------------------------------------
# sandwich


def sensitivity_matrix(params: ParameterSet, data: Dataset, spec: ModelSpec,
                       rel_step: float = 1e-5, threads: int = 1) -> np.ndarray:
    """Symmetrized central-difference Jacobian of the analytic total score."""
    lay = layout_for(spec)
    v = lay.to_vector(params)
    return _fd_jacobian(lambda z: evaluate(lay.from_vector(z), data, spec, threads).gradient, v, rel_step)


def variability_matrix(params: ParameterSet, data: Dataset, spec: ModelSpec) -> np.ndarray:
    S = evaluate(params, data, spec).scores
    return S.T @ S


def sandwich(H: np.ndarray, J: np.ndarray) -> np.ndarray:
    cond = np.linalg.cond(H)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularSensitivityError(cond)
    Hinv = np.linalg.inv(H)
    V = Hinv @ J @ Hinv
    return 0.5 * (V + V.T)


def godambe_vcov(params: ParameterSet, data: Dataset, spec: ModelSpec) -> np.ndarray:
    """H^-1 J H^-1 in the constrained layout."""
    return sandwich(sensitivity_matrix(params, data, spec), variability_matrix(params, data, spec))


def information_criteria(log_pl: float, H: np.ndarray, J: np.ndarray, n: float) -> tuple[float, float]:
    """Composite-likelihood AIC and BIC with penalty tr(J H^-1)."""
    cond = np.linalg.cond(H)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularSensitivityError(cond)
    penalty = float(np.trace(np.linalg.solve(H, J)))
    return -2.0 * log_pl + 2.0 * penalty, -2.0 * log_pl + math.log(n) * penalty


# ---------------------------------------------------------------------------
# fit


def fit(spec: ModelSpec, data: Dataset, config: FitConfig = FitConfig(),
        start: ParameterSet | None = None) -> FitResult:
    validate_dataset(data, spec)
    if data.n < 2:
        raise DataError("need at least 2 units to fit")
    lay = layout_for(spec)
    n = data.n
    fun = unconstrained_objective(spec, data, config.threads)

    params0 = start if start is not None else initial_values(spec, data)
    u0 = encode(params0, spec)
    f0, g0 = fun(u0)
    rng = np.random.default_rng(config.seed)
    attempts = 0
    while not (np.isfinite(f0) and np.all(np.isfinite(g0))) and attempts < 20:
        u0 = encode(params0, spec) + rng.normal(scale=0.1, size=u0.size)
        f0, g0 = fun(u0)
        attempts += 1

    def scaled(u):
        f, g = fun(u)
        if not np.isfinite(f):
            return np.inf, np.zeros_like(g)
        return f / n, g / n

    gtol = 0.1 * config.tolerance(f0) / n
    method = SOLVERS[config.solver.lower()]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = minimize(scaled, u0, jac=True, method=method,
                       options={"maxiter": config.max_iterations, "gtol": gtol, "norm": 2})
    u, iterations = res.x, int(res.nit)
    f, g = fun(u)
    message = str(res.message)
    # Newton refinement to well below the reported tolerance; quadratic
    # convergence makes this one or two steps from a quasi-Newton solution
    polish = lambda obj: POLISH_FACTOR * config.tolerance(obj)
    if np.linalg.norm(g) > polish(f) and config.newton_steps > 0:
        u, f, g, steps = _newton(fun, u, polish, config.newton_steps)
        iterations += steps
        message += f"; {steps} Newton refinement steps"
    gnorm = float(np.linalg.norm(g))
    converged = bool(np.isfinite(f) and gnorm <= config.tolerance(f))

    v = lay.from_unconstrained(u)
    est = lay.from_vector(v)
    contrib = evaluate(est, data, spec, config.threads)
    log_pl = -contrib.total

    se = vcov = None
    claic = clbic = math.nan
    if config.compute_se:
        H = sensitivity_matrix(est, data, spec, threads=config.threads)
        J = contrib.scores.T @ contrib.scores
        try:
            vcov = sandwich(H, J)
            se = np.sqrt(np.clip(np.diag(vcov), 0.0, None))
            claic, clbic = information_criteria(log_pl, H, J, n)
        except SingularSensitivityError as exc:
            warnings.warn(f"standard errors unavailable: {exc}", EstimationWarning, stacklevel=2)
            se = np.full(lay.size, math.nan)
            vcov = np.full((lay.size, lay.size), math.nan)

    R = est.correlation_matrix(spec)
    min_eig = float(np.linalg.eigvalsh(R).min())
    if min_eig < R_EIGEN_WARN:
        warnings.warn(
            f"estimated correlation matrix is not positive definite (min eigenvalue {min_eig:.3g})",
            EstimationWarning, stacklevel=2,
        )
    if contrib.n_empty:
        warnings.warn(f"{contrib.n_empty} units have no observed response", EstimationWarning, stacklevel=2)

    return FitResult(
        spec=spec, estimates=est, names=lay.names, estimate_vector=v, se=se, vcov=vcov,
        log_pl=log_pl, claic=claic, clbic=clbic, n_units=n, converged=converged,
        iterations=iterations, min_eigen_R=min_eig, gradient_norm=gnorm,
        n_empty_units=contrib.n_empty, solver=config.solver.lower(), message=message,
        standardization=data.standardization,
    )


# ---------------------------------------------------------------------------
# Wald table

SIGNIF_LEGEND = "Signif. codes:  0 '***' 0.001 '**' 0.01 '*' 0.05 '.' 0.1 ' ' 1"


def significance_stars(p: float) -> str:
    if not math.isfinite(p):
        return ""
    for cut, mark in ((0.001, "***"), (0.01, "**"), (0.05, "*"), (0.1, ".")):
        if p < cut:
            return mark
    return ""


@dataclass(frozen=True)
class WaldRow:
    group: str
    name: str
    estimate: float
    se: float
    z: float
    p: float
    stars: str

    @property
    def flagged(self) -> bool:
        return not math.isfinite(self.se)


def wald_table(result: FitResult) -> list[WaldRow]:
    """Two-sided normal Wald tests of every parameter against zero."""
    lay = layout_for(result.spec)
    se = result.se if result.se is not None else np.full(lay.size, math.nan)
    rows = []
    for group, idx in lay.groups:
        for i in idx:
            est, s = float(result.estimate_vector[i]), float(se[i])
            if math.isfinite(s) and s > 0:
                z = est / s
                p = float(2.0 * ndtr(-abs(z)))
            else:
                z = p = math.nan
            rows.append(WaldRow(group, result.names[i], est, s, z, p, significance_stars(p)))
    return rows
