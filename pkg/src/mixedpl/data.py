"""Datasets, CSV ingestion/export and covariate standardization."""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .formula import FormulaSpec, parse_formula
from .model import GAUSSIAN, KINDS, ORDINAL, ModelSpec, ParameterSet, ResponseSpec

NA_TOKENS = ("", "NA")


class DataError(ValueError):
    """Input data cannot be used with the requested model."""


class DataWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    """Responses and covariates for n units.

    ``y`` is (n, q) float: 1-based category indices for ordinal responses,
    reals for gaussian ones, NaN where missing. ``standardization`` maps each
    covariate to the (mean, sd) that was removed from the raw column.
    """

    y: np.ndarray
    x: np.ndarray
    observed_mask: np.ndarray
    unit_ids: tuple
    standardization: dict[str, tuple[float, float]] | None = None

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @classmethod
    def from_arrays(cls, y, x=None, unit_ids=None, spec: ModelSpec | None = None) -> Dataset:
        y = np.array(y, dtype=float, ndmin=2)
        n = y.shape[0]
        x = np.zeros((n, 0)) if x is None else np.array(x, dtype=float, ndmin=2)
        if x.shape[0] != n:
            if x.size == 0:
                x = np.zeros((n, 0))
            else:
                raise DataError(f"x has {x.shape[0]} rows, y has {n}")
        ids = tuple(range(1, n + 1)) if unit_ids is None else tuple(unit_ids)
        data = cls(y=y, x=x, observed_mask=~np.isnan(y), unit_ids=ids)
        if spec is not None:
            validate_dataset(data, spec)
        return data

    def subset(self, rows) -> Dataset:
        rows = np.asarray(rows)
        ids = np.asarray(self.unit_ids, dtype=object)[rows]
        return replace(
            self, y=self.y[rows], x=self.x[rows], observed_mask=self.observed_mask[rows],
            unit_ids=tuple(ids.tolist()),
        )

    def with_missing(self, mask) -> Dataset:
        """Copy with additional response cells set to missing."""
        y = self.y.copy()
        y[np.asarray(mask, dtype=bool)] = np.nan
        return replace(self, y=y, observed_mask=~np.isnan(y))

    def raw_covariates(self) -> np.ndarray:
        if not self.standardization:
            return self.x.copy()
        stats = np.array(list(self.standardization.values()), dtype=float).reshape(-1, 2)
        return self.x * stats[:, 1] + stats[:, 0]


def validate_dataset(data: Dataset, spec: ModelSpec) -> None:
    if data.y.shape[1] != spec.q:
        raise DataError(f"data has {data.y.shape[1]} response columns, model has {spec.q}")
    if data.x.shape[1] != spec.p:
        raise DataError(f"data has {data.x.shape[1]} covariate columns, model has {spec.p}")
    if not np.array_equal(data.observed_mask, ~np.isnan(data.y)):
        raise DataError("observed_mask does not match missing cells")
    if not np.all(np.isfinite(data.x)):
        raise DataError("covariates must be finite")
    for j, r in enumerate(spec.responses):
        col = data.y[data.observed_mask[:, j], j]
        if not np.all(np.isfinite(col)):
            raise DataError(f"response {r.name!r} has non-finite values")
        if r.is_ordinal:
            bad = (col != np.round(col)) | (col < 1) | (col > r.n_categories)
            if np.any(bad):
                raise DataError(f"ordinal response {r.name!r} must hold categories 1..{r.n_categories}")


def standardize(data: Dataset, names: Sequence[str] | None = None) -> Dataset:
    """Center and scale every covariate column to mean 0, sample sd 1.

    The removed (mean, sd) pairs are composed with any earlier standardization,
    so ``raw_covariates`` always recovers the original columns.
    """
    p = data.x.shape[1]
    if p == 0:
        raise DataError("no covariates to standardize")
    names = list(names) if names is not None else (
        list(data.standardization) if data.standardization else [f"x{c + 1}" for c in range(p)]
    )
    mean = data.x.mean(axis=0)
    sd = data.x.std(axis=0, ddof=1)
    for c in range(p):
        if not sd[c] > 0:
            raise DataError(f"covariate {names[c]!r} has zero variance")
    x = (data.x - mean) / sd
    prior = data.standardization or {}
    record = {}
    for c, name in enumerate(names):
        m0, s0 = prior.get(name, (0.0, 1.0))
        record[name] = (float(m0 + mean[c] * s0), float(sd[c] * s0))
    return replace(data, x=x, standardization=record)


def unstandardize_parameters(params: ParameterSet, spec: ModelSpec,
                             standardization: dict[str, tuple[float, float]]) -> ParameterSet:
    """Express coefficients, intercepts and thresholds on the raw covariate scale."""
    stats = np.array([standardization[c] for c in spec.covariates], dtype=float).reshape(-1, 2)
    mean, sd = stats[:, 0], stats[:, 1]
    beta = params.coefficients.reshape(spec.q, spec.p) / sd
    shift = beta @ mean
    thresholds = {}
    intercepts = {}
    for j, r in enumerate(spec.responses):
        if r.is_ordinal:
            thresholds[r.name] = params.thresholds[r.name] + shift[j]
        else:
            intercepts[r.name] = params.intercepts[r.name] - shift[j]
    return ParameterSet(thresholds, beta, intercepts, dict(params.scales), params.correlations.copy())


def _is_na(cell: str) -> bool:
    return cell.strip() in NA_TOKENS


def _to_float(cell: str) -> float:
    v = float(cell)
    if not math.isfinite(v):
        raise ValueError(cell)
    return v


def _category_order(labels: set[str]) -> list[str]:
    numeric = {}
    for lab in labels:
        try:
            numeric[lab] = _to_float(lab)
        except ValueError:
            return sorted(labels)
    if len(set(numeric.values())) != len(labels):
        raise DataError(f"ordinal labels {sorted(labels)} collide numerically")
    return sorted(labels, key=numeric.__getitem__)


def load_csv(path, formula: str | FormulaSpec, response_types: Sequence[str],
             na_policy: str = "fail", standardize_covariates: bool = False) -> tuple[Dataset, ModelSpec]:
    """Read a CSV file into a Dataset and its ModelSpec.

    Ordinal columns are mapped to 1..K by the sorted distinct observed labels
    (numeric order when every label parses as a number). Rows with missing
    covariates are dropped with a warning. With ``na_policy="fail"`` any
    missing response raises; with ``"pass"`` it is recorded in the mask.
    """
    if na_policy not in ("fail", "pass"):
        raise ValueError(f"na_policy must be 'fail' or 'pass', got {na_policy!r}")
    fspec = parse_formula(formula) if isinstance(formula, str) else formula
    types = [t.strip().lower() for t in response_types]
    if len(types) != len(fspec.response_names):
        raise DataError(
            f"{len(types)} response types given for {len(fspec.response_names)} responses"
        )
    for t in types:
        if t not in KINDS:
            raise DataError(f"unknown response type {t!r} (expected 'ordinal' or 'gaussian')")

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = list(reader)

    col = {name: i for i, name in enumerate(header)}
    for name in fspec.response_names + fspec.covariate_names:
        if name not in col:
            raise DataError(f"{path}: unknown column {name!r}")

    resp_cells, cov_values, ids = [], [], []
    dropped = 0
    for r, row in enumerate(rows, start=1):
        if not any(cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise DataError(f"row {r} (line {r + 1}): expected {len(header)} fields, got {len(row)}")
        covs = []
        missing_cov = False
        for name in fspec.covariate_names:
            cell = row[col[name]]
            if _is_na(cell):
                missing_cov = True
                break
            try:
                covs.append(_to_float(cell))
            except ValueError:
                raise DataError(
                    f"row {r} (line {r + 1}), column {name!r}: cannot parse {cell!r} as a number"
                ) from None
        if missing_cov:
            dropped += 1
            continue
        resp_cells.append([row[col[name]].strip() for name in fspec.response_names])
        cov_values.append(covs)
        ids.append(r)
    if dropped:
        warnings.warn(f"dropped {dropped} rows with missing covariates", DataWarning, stacklevel=2)
    if not ids:
        raise DataError(f"{path}: no usable rows")

    n, q = len(ids), len(types)
    y = np.full((n, q), np.nan)
    responses = []
    for j, (name, kind) in enumerate(zip(fspec.response_names, types)):
        cells = [row[j] for row in resp_cells]
        if na_policy == "fail":
            for i, cell in enumerate(cells):
                if _is_na(cell):
                    raise DataError(f"missing value in response {name!r} at row {ids[i]} (line {ids[i] + 1})")
        if kind == ORDINAL:
            labels = _category_order({c for c in cells if not _is_na(c)})
            if len(labels) < 2:
                raise DataError(f"ordinal response {name!r} has fewer than 2 distinct observed values")
            index = {lab: k + 1 for k, lab in enumerate(labels)}
            for i, cell in enumerate(cells):
                if not _is_na(cell):
                    y[i, j] = index[cell]
            responses.append(ResponseSpec(name, ORDINAL, len(labels), tuple(labels)))
        else:
            for i, cell in enumerate(cells):
                if _is_na(cell):
                    continue
                try:
                    y[i, j] = _to_float(cell)
                except ValueError:
                    raise DataError(
                        f"row {ids[i]} (line {ids[i] + 1}), column {name!r}: cannot parse {cell!r} as a number"
                    ) from None
            responses.append(ResponseSpec(name, GAUSSIAN))

    spec = ModelSpec(tuple(responses), fspec.covariate_names, standardize=standardize_covariates)
    x = np.array(cov_values, dtype=float).reshape(n, len(fspec.covariate_names))
    data = Dataset(y=y, x=x, observed_mask=~np.isnan(y), unit_ids=tuple(ids))
    if standardize_covariates and spec.p:
        data = standardize(data, spec.covariates)
    return data, spec


def write_csv(path, data: Dataset, spec: ModelSpec, raw_covariates: bool = True) -> None:
    """Write responses then covariates; missing cells become ``NA``.

    Floats use ``repr`` (shortest round-trip decimal).
    """
    x = data.raw_covariates() if raw_covariates else data.x
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(spec.names) + list(spec.covariates))
        for i in range(data.n):
            row = []
            for j, r in enumerate(spec.responses):
                v = data.y[i, j]
                if not data.observed_mask[i, j]:
                    row.append("NA")
                elif r.is_ordinal:
                    row.append(r.category_labels[int(v) - 1])
                else:
                    row.append(repr(float(v)))
            row += [repr(float(v)) for v in x[i]]
            w.writerow(row)
