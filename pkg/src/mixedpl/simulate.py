"""Draw datasets from the latent-regression model."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.special import ndtri

from .data import Dataset
from .model import GAUSSIAN, ORDINAL, ModelSpec, ParameterSet, ResponseSpec

PD_MIN_EIGEN = 1e-10
COVARIATE_LAWS = ("standard-normal-iid",)


class SimulationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SimConfig:
    spec: ModelSpec
    params: ParameterSet
    n: int
    seed: int = 0
    missing_rate: Mapping[str, float] = field(default_factory=dict)
    covariate_law: str = "standard-normal-iid"

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise SimulationError(f"n must be a positive integer, got {self.n}")
        if self.covariate_law not in COVARIATE_LAWS:
            raise SimulationError(f"unsupported covariate law {self.covariate_law!r}")
        for name, rate in self.missing_rate.items():
            if name not in self.spec.names:
                raise SimulationError(f"missing rate given for unknown response {name!r}")
            if not 0.0 <= rate < 1.0:
                raise SimulationError(f"missing rate for {name!r} must lie in [0, 1), got {rate}")
        self.params.validate(self.spec)

    def rates(self) -> np.ndarray:
        return np.array([float(self.missing_rate.get(nm, 0.0)) for nm in self.spec.names])


@dataclass(frozen=True, eq=False)
class Simulated:
    data: Dataset
    latent: np.ndarray  # (n, q) errors before scaling and slotting


def _uniforms(gen: np.random.Generator, size) -> np.ndarray:
    # 53 random bits centred in their cell: never exactly 0 or 1
    raw = gen.integers(0, 2**64, size=size, dtype=np.uint64, endpoint=False)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) / 2.0**53


def _normals(gen: np.random.Generator, size) -> np.ndarray:
    return ndtri(_uniforms(gen, size))


def cholesky_factor(R: np.ndarray) -> np.ndarray:
    w = np.linalg.eigvalsh(R)
    if w.min() <= PD_MIN_EIGEN:
        raise SimulationError(f"correlation matrix is not positive definite (min eigenvalue {w.min():.3g})")
    return np.linalg.cholesky(R)


def slot(latent: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    """Category 1..K with theta_{r-1} < latent <= theta_r; ties go to the lower category."""
    return np.searchsorted(thresholds, latent, side="left") + 1


def simulate(config: SimConfig, return_latent: bool = False) -> Dataset | Simulated:
    """Deterministic in ``config.seed``.

    Draw order from one Philox stream: covariates (n x p), errors (n x q),
    then one uniform per cell for missingness.
    """
    spec, params, n = config.spec, config.params, int(config.n)
    L = cholesky_factor(params.correlation_matrix(spec))
    gen = np.random.Generator(np.random.Philox(config.seed))
    x = _normals(gen, (n, spec.p))
    eps = _normals(gen, (n, spec.q)) @ L.T
    drop = _uniforms(gen, (n, spec.q)) < config.rates()

    beta = params.coefficients.reshape(spec.q, spec.p)
    eta = x @ beta.T
    y = np.empty((n, spec.q))
    for j, r in enumerate(spec.responses):
        if r.is_ordinal:
            y[:, j] = slot(eta[:, j] + eps[:, j], params.thresholds[r.name])
        else:
            y[:, j] = params.intercepts[r.name] + eta[:, j] + params.scales[r.name] * eps[:, j]
    y[drop] = np.nan
    data = Dataset(y=y, x=x, observed_mask=~drop, unit_ids=tuple(range(1, n + 1)))
    return Simulated(data, eps) if return_latent else data


TOY_CORRELATIONS = (0.64, 0.78, 0.65, 0.92, 0.80, 0.90)


def toy_spec() -> ModelSpec:
    return ModelSpec(
        (
            ResponseSpec("y1", ORDINAL, 3),
            ResponseSpec("y2", ORDINAL, 3),
            ResponseSpec("z1", GAUSSIAN),
            ResponseSpec("z2", GAUSSIAN),
        ),
        ("X1", "X2", "X3"),
    )


def toy_parameters() -> ParameterSet:
    """Truth for the four-response toy model: two 3-level ordinals, two gaussians."""
    return ParameterSet(
        thresholds={"y1": np.array([-1.0, 1.0]), "y2": np.array([-2.0, 2.0])},
        coefficients=np.tile([2.0, 0.0, -2.0], (4, 1)),
        intercepts={"z1": -1.0, "z2": 1.0},
        scales={"z1": 1.0, "z2": 2.0},
        correlations=np.array(TOY_CORRELATIONS),
    )


def toy_generator(seed: int, n: int = 1000, missing_rate: Mapping[str, float] | None = None) -> Dataset:
    config = SimConfig(toy_spec(), toy_parameters(), n, seed, dict(missing_rate or {}))
    return simulate(config)
