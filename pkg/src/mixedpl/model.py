"""Model specification, parameter containers and the unconstrained encoding.

Constrained layout (the order used for gradients, covariances and reports):

    thresholds    ordinal responses in spec order, K_j - 1 each
    intercepts    gaussian responses in spec order
    coefficients  covariate-major: (r1, x1), (r2, x1), ..., (r1, x2), ...
    scales        gaussian responses in spec order
    correlations  pairs (k, l), k < l, lexicographic

The unconstrained vector has the same layout with thresholds replaced by
(first threshold, log increments), scales by log sigma and correlations by
Fisher z = atanh(rho).
"""
from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field

import numpy as np

ORDINAL = "ordinal"
GAUSSIAN = "gaussian"
KINDS = (ORDINAL, GAUSSIAN)

# exp() stays finite and nonzero inside this range
_LOG_CLIP = 700.0
_RHO_MAX = np.nextafter(1.0, 0.0)


class ParameterError(ValueError):
    """A parameter set violates its invariants or does not match the spec."""


@dataclass(frozen=True)
class ResponseSpec:
    name: str
    kind: str
    n_categories: int | None = None
    category_labels: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"response {self.name!r}: unknown kind {self.kind!r}")
        object.__setattr__(self, "category_labels", tuple(str(c) for c in self.category_labels))
        if self.kind == ORDINAL:
            if self.n_categories is None and self.category_labels:
                object.__setattr__(self, "n_categories", len(self.category_labels))
            if self.n_categories is None or self.n_categories < 2:
                raise ValueError(f"ordinal response {self.name!r} needs at least 2 categories")
            if not self.category_labels:
                labels = tuple(str(r) for r in range(1, self.n_categories + 1))
                object.__setattr__(self, "category_labels", labels)
            if len(self.category_labels) != self.n_categories:
                raise ValueError(f"response {self.name!r}: label count != n_categories")
        elif self.n_categories is not None or self.category_labels:
            raise ValueError(f"gaussian response {self.name!r} cannot have categories")

    @property
    def is_ordinal(self) -> bool:
        return self.kind == ORDINAL

    def to_dict(self) -> dict:
        d = {"name": self.name, "kind": self.kind}
        if self.is_ordinal:
            d["n_categories"] = self.n_categories
            d["category_labels"] = list(self.category_labels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ResponseSpec:
        return cls(
            name=d["name"],
            kind=d["kind"],
            n_categories=d.get("n_categories"),
            category_labels=tuple(d.get("category_labels", ())),
        )


@dataclass(frozen=True)
class ModelSpec:
    responses: tuple[ResponseSpec, ...]
    covariates: tuple[str, ...] = ()
    standardize: bool = False

    def __post_init__(self):
        object.__setattr__(self, "responses", tuple(self.responses))
        object.__setattr__(self, "covariates", tuple(self.covariates))
        if not self.responses:
            raise ValueError("a model needs at least one response")
        names = [r.name for r in self.responses]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate response names: {names}")
        if len(set(self.covariates)) != len(self.covariates):
            raise ValueError(f"duplicate covariate names: {list(self.covariates)}")
        clash = set(names) & set(self.covariates)
        if clash:
            raise ValueError(f"names used as both response and covariate: {sorted(clash)}")

    @property
    def q(self) -> int:
        return len(self.responses)

    @property
    def p(self) -> int:
        return len(self.covariates)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(r.name for r in self.responses)

    @property
    def ordinal_indices(self) -> tuple[int, ...]:
        return tuple(j for j, r in enumerate(self.responses) if r.is_ordinal)

    @property
    def gaussian_indices(self) -> tuple[int, ...]:
        return tuple(j for j, r in enumerate(self.responses) if not r.is_ordinal)

    @property
    def pairs(self) -> tuple[tuple[int, int], ...]:
        return tuple(itertools.combinations(range(self.q), 2))

    def to_dict(self) -> dict:
        return {
            "responses": [r.to_dict() for r in self.responses],
            "covariates": list(self.covariates),
            "standardize": self.standardize,
        }

    @classmethod
    def from_dict(cls, d: dict) -> ModelSpec:
        return cls(
            responses=tuple(ResponseSpec.from_dict(r) for r in d["responses"]),
            covariates=tuple(d.get("covariates", ())),
            standardize=bool(d.get("standardize", False)),
        )


def count_parameters(spec: ModelSpec) -> int:
    n = 0
    for r in spec.responses:
        n += (r.n_categories - 1 + spec.p) if r.is_ordinal else (2 + spec.p)
    return n + spec.q * (spec.q - 1) // 2


@dataclass(frozen=True, eq=False)
class ParameterSet:
    """Model parameters on their natural (constrained) scale.

    ``coefficients`` is a (q, p) array in spec order; ``correlations`` follows
    ``spec.pairs``. Thresholds, intercepts and scales are keyed by response name.
    """

    thresholds: dict[str, np.ndarray]
    coefficients: np.ndarray
    intercepts: dict[str, float]
    scales: dict[str, float]
    correlations: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "thresholds",
            {k: np.asarray(v, dtype=float) for k, v in self.thresholds.items()},
        )
        object.__setattr__(self, "coefficients", np.atleast_2d(np.asarray(self.coefficients, dtype=float)))
        object.__setattr__(self, "intercepts", {k: float(v) for k, v in self.intercepts.items()})
        object.__setattr__(self, "scales", {k: float(v) for k, v in self.scales.items()})
        object.__setattr__(self, "correlations", np.asarray(self.correlations, dtype=float).ravel())

    def validate(self, spec: ModelSpec) -> None:
        if self.coefficients.shape != (spec.q, spec.p):
            if not (spec.p == 0 and self.coefficients.size == 0):
                raise ParameterError(
                    f"coefficients have shape {self.coefficients.shape}, expected {(spec.q, spec.p)}"
                )
        if self.correlations.shape != (len(spec.pairs),):
            raise ParameterError(
                f"expected {len(spec.pairs)} correlations, got {self.correlations.size}"
            )
        for r in spec.responses:
            if r.is_ordinal:
                th = self.thresholds.get(r.name)
                if th is None or th.shape != (r.n_categories - 1,):
                    raise ParameterError(f"{r.name}: expected {r.n_categories - 1} thresholds")
                if not np.all(np.isfinite(th)) or np.any(np.diff(th) <= 0):
                    raise ParameterError(f"{r.name}: thresholds must be finite and strictly increasing")
            else:
                if r.name not in self.intercepts or r.name not in self.scales:
                    raise ParameterError(f"{r.name}: missing intercept or scale")
                if not self.scales[r.name] > 0:
                    raise ParameterError(f"{r.name}: scale must be positive")
        if np.any(~(np.abs(self.correlations) < 1)):
            raise ParameterError("correlations must lie strictly inside (-1, 1)")

    def correlation_matrix(self, spec: ModelSpec) -> np.ndarray:
        R = np.eye(spec.q)
        for (k, l), rho in zip(spec.pairs, self.correlations):
            R[k, l] = R[l, k] = rho
        return R

    def to_dict(self, spec: ModelSpec) -> dict:
        coef = self.coefficients.reshape(spec.q, spec.p)
        return {
            "thresholds": {k: v.tolist() for k, v in self.thresholds.items()},
            "intercepts": dict(self.intercepts),
            "coefficients": {
                name: dict(zip(spec.covariates, coef[j].tolist()))
                for j, name in enumerate(spec.names)
            },
            "scales": dict(self.scales),
            "correlations": [
                {"pair": [spec.names[k], spec.names[l]], "value": float(rho)}
                for (k, l), rho in zip(spec.pairs, self.correlations)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict, spec: ModelSpec) -> ParameterSet:
        coef = np.zeros((spec.q, spec.p))
        for j, name in enumerate(spec.names):
            row = d.get("coefficients", {}).get(name, {})
            for c, cov in enumerate(spec.covariates):
                coef[j, c] = row.get(cov, 0.0)
        lookup = {}
        for item in d.get("correlations", []):
            a, b = item["pair"]
            lookup[(a, b)] = lookup[(b, a)] = item["value"]
        rho = [lookup.get((spec.names[k], spec.names[l]), 0.0) for k, l in spec.pairs]
        params = cls(
            thresholds=d.get("thresholds", {}),
            coefficients=coef,
            intercepts=d.get("intercepts", {}),
            scales=d.get("scales", {}),
            correlations=rho,
        )
        params.validate(spec)
        return params


@dataclass(frozen=True, eq=False)
class ParameterLayout:
    """Index map from parameter blocks to positions in the flat vectors."""

    spec: ModelSpec
    names: tuple[str, ...]
    groups: tuple[tuple[str, np.ndarray], ...]
    theta: dict[int, np.ndarray] = field(repr=False)
    intercept: dict[int, int] = field(repr=False)
    coef: np.ndarray = field(repr=False)
    sigma: dict[int, int] = field(repr=False)
    rho: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.names)

    def response_indices(self, j: int) -> np.ndarray:
        """All positions belonging to response j (excluding correlations)."""
        idx = list(self.coef[j])
        if j in self.theta:
            idx = list(self.theta[j]) + idx
        else:
            idx = [self.intercept[j]] + idx + [self.sigma[j]]
        return np.array(idx, dtype=int)

    # constrained <-> ParameterSet

    def to_vector(self, params: ParameterSet) -> np.ndarray:
        spec = self.spec
        v = np.empty(self.size)
        for j, idx in self.theta.items():
            v[idx] = params.thresholds[spec.names[j]]
        for j, i in self.intercept.items():
            v[i] = params.intercepts[spec.names[j]]
        if spec.p:
            v[self.coef] = params.coefficients.reshape(spec.q, spec.p)
        for j, i in self.sigma.items():
            v[i] = params.scales[spec.names[j]]
        v[self.rho] = params.correlations
        return v

    def from_vector(self, v: np.ndarray) -> ParameterSet:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.size,):
            raise ParameterError(f"expected a vector of length {self.size}, got shape {v.shape}")
        names = self.spec.names
        return ParameterSet(
            thresholds={names[j]: v[idx].copy() for j, idx in self.theta.items()},
            coefficients=v[self.coef] if self.spec.p else np.zeros((self.spec.q, 0)),
            intercepts={names[j]: v[i] for j, i in self.intercept.items()},
            scales={names[j]: v[i] for j, i in self.sigma.items()},
            correlations=v[self.rho].copy(),
        )

    # constrained <-> unconstrained

    def to_unconstrained(self, v: np.ndarray) -> np.ndarray:
        u = np.array(v, dtype=float)
        for idx in self.theta.values():
            u[idx[1:]] = np.log(np.diff(v[idx]))
        sig = list(self.sigma.values())
        u[sig] = np.log(v[sig])
        u[self.rho] = np.arctanh(v[self.rho])
        return u

    def from_unconstrained(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.size,):
            raise ParameterError(f"expected a vector of length {self.size}, got shape {u.shape}")
        v = u.copy()
        for idx in self.theta.values():
            steps = np.exp(np.clip(u[idx[1:]], -_LOG_CLIP, _LOG_CLIP))
            v[idx] = np.cumsum(np.concatenate([u[idx[:1]], steps]))
        sig = list(self.sigma.values())
        v[sig] = np.exp(np.clip(u[sig], -_LOG_CLIP, _LOG_CLIP))
        v[self.rho] = np.clip(np.tanh(u[self.rho]), -_RHO_MAX, _RHO_MAX)
        return v

    def chain_rule(self, grad: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Map a gradient in the constrained layout to the unconstrained one.

        ``v`` is the constrained vector the gradient was evaluated at.
        """
        grad = np.asarray(grad, dtype=float)
        if grad.shape != (self.size,) or np.shape(v) != (self.size,):
            raise ParameterError("gradient and parameter vector must match the layout size")
        g = grad.copy()
        for idx in self.theta.values():
            tail = np.cumsum(grad[idx][::-1])[::-1]
            g[idx] = tail * np.concatenate([[1.0], np.diff(v[idx])])
        sig = list(self.sigma.values())
        g[sig] = grad[sig] * v[sig]
        g[self.rho] = grad[self.rho] * (1.0 - v[self.rho] ** 2)
        return g


@functools.lru_cache(maxsize=64)
def layout_for(spec: ModelSpec) -> ParameterLayout:
    names: list[str] = []
    pos = itertools.count()

    theta = {}
    for j in spec.ordinal_indices:
        r = spec.responses[j]
        labels = r.category_labels
        theta[j] = np.array([next(pos) for _ in range(r.n_categories - 1)], dtype=int)
        names += [f"{r.name} {labels[c]}|{labels[c + 1]}" for c in range(r.n_categories - 1)]

    intercept = {}
    for j in spec.gaussian_indices:
        intercept[j] = next(pos)
        names.append(f"beta0.{spec.names[j]}")

    coef = np.zeros((spec.q, spec.p), dtype=int)
    for c, cov in enumerate(spec.covariates):
        for j, name in enumerate(spec.names):
            coef[j, c] = next(pos)
            names.append(f"{name}{cov}")

    sigma = {}
    for j in spec.gaussian_indices:
        sigma[j] = next(pos)
        names.append(f"sigma.{spec.names[j]}")

    rho = np.array([next(pos) for _ in spec.pairs], dtype=int)
    names += [f"corr_{spec.names[k]}_{spec.names[l]}" for k, l in spec.pairs]

    def _arr(d):
        vals = [np.atleast_1d(v) for v in d.values()]
        return np.concatenate(vals).astype(int) if vals else np.zeros(0, dtype=int)

    groups = (
        ("Thresholds", _arr(theta)),
        ("Intercept for normals", _arr(intercept)),
        ("Coefficients", np.sort(coef.ravel())),
        ("Standard deviation of the Gaussian response variables", _arr(sigma)),
        ("Correlation params", rho),
    )
    return ParameterLayout(
        spec=spec, names=tuple(names), groups=groups,
        theta=theta, intercept=intercept, coef=coef, sigma=sigma, rho=rho,
    )


def encode(params: ParameterSet, spec: ModelSpec) -> np.ndarray:
    """Unconstrained optimization vector for ``params``."""
    params.validate(spec)
    lay = layout_for(spec)
    return lay.to_unconstrained(lay.to_vector(params))


def decode(u: np.ndarray, spec: ModelSpec) -> ParameterSet:
    lay = layout_for(spec)
    return lay.from_vector(lay.from_unconstrained(u))


def chain_rule_gradient(grad_constrained: np.ndarray, params: ParameterSet, spec: ModelSpec) -> np.ndarray:
    """Gradient with respect to the unconstrained vector, given one in (theta, beta, sigma, rho)."""
    lay = layout_for(spec)
    return lay.chain_rule(grad_constrained, lay.to_vector(params))
