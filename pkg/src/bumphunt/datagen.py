"""Synthetic data for bump hunting and CSV ingestion.

Two designs are covered: a Gaussian target (one or several components)
optionally noised by a uniform background with a null response, and the
single-component, noise-free variant with a continuous normal response
that the benchmarks use.

Random streams come from numpy's Philox counter-based bit generator,
seeded through ``numpy.random.SeedSequence``. A replicate's stream is
derived from ``SeedSequence([master_seed, *keys])``, so any cell of an
experiment can be regenerated on its own.
"""

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .exceptions import (
    DataError,
    DataParseError,
    DegenerateDataError,
    SingularModelError,
    ValidationError,
)
from .numkernel import sym_eigen, sym_sqrt

PSD_REPAIR_EPS = 1e-8


def make_rng(seed):
    """Philox generator for an integer seed or a sequence of integer keys."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(seed))
    entropy = [int(k) for k in seed] if isinstance(seed, (tuple, list)) else int(seed)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def derive_seed(master_seed, *keys):
    """Seed for a sub-stream, e.g. ``derive_seed(master, replicate, p)``."""
    return (int(master_seed),) + tuple(int(k) for k in keys)


def _readonly(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Predictors ``X`` (n x p), response ``Z`` (n,), optional provenance labels.

    Label 0 marks background noise; 1..G the target component a row came from.
    """

    X: np.ndarray
    Z: np.ndarray
    labels: Optional[np.ndarray] = None
    columns: Optional[tuple] = None
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        Z = np.asarray(self.Z, dtype=float).reshape(-1)
        if X.ndim != 2 or X.shape[0] < 1:
            raise DataError(f"X must be a non-empty 2-d array, got shape {X.shape}")
        if Z.shape[0] != X.shape[0]:
            raise DataError(f"Z has {Z.shape[0]} entries but X has {X.shape[0]} rows")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Z))):
            raise DataError("dataset contains non-finite values")
        object.__setattr__(self, "X", _readonly(X))
        object.__setattr__(self, "Z", _readonly(Z))
        if self.labels is not None:
            labels = np.array(self.labels, dtype=np.int64).reshape(-1)
            if labels.shape[0] != X.shape[0]:
                raise DataError("labels length does not match the row count")
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)
        if self.columns is None:
            object.__setattr__(self, "columns", tuple(f"x{j + 1}" for j in range(X.shape[1])))
        elif len(self.columns) != X.shape[1]:
            raise DataError("column names do not match the predictor count")
        else:
            object.__setattr__(self, "columns", tuple(self.columns))

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    def subset(self, rows):
        labels = None if self.labels is None else self.labels[rows]
        return Dataset(self.X[rows], self.Z[rows], labels, self.columns, dict(self.metadata))


class ResponseSpec(NamedTuple):
    """Normal response ``N(mu, sigma^2)``; ``sigma == 0`` gives the fixed value ``mu``."""

    mu: float
    sigma: float = 0.0


class Covariance(NamedTuple):
    matrix: np.ndarray
    repaired: bool
    min_eigenvalue: float


def build_covariance(variances, correlation, eps=PSD_REPAIR_EPS):
    """``V^(1/2) R V^(1/2)``, with eigenvalue clipping at ``eps`` if it is not PD."""
    v = np.asarray(variances, dtype=float).reshape(-1)
    r = np.asarray(correlation, dtype=float)
    if r.shape != (v.size, v.size):
        raise ValidationError(f"correlation shape {r.shape} does not match {v.size} variances")
    if np.any(v <= 0) or not np.all(np.isfinite(v)):
        raise ValidationError("variances must be positive and finite")
    if not np.allclose(np.diag(r), 1.0, rtol=0, atol=1e-12):
        raise ValidationError("correlation matrix must have a unit diagonal")
    if np.any(np.abs(r) > 1.0 + 1e-12):
        raise ValidationError("correlation entries must lie in [-1, 1]")
    sd = np.sqrt(v)
    sigma = sd[:, None] * r * sd[None, :]
    sigma = 0.5 * (sigma + sigma.T)
    values, vectors = sym_eigen(sigma)
    if values[-1] >= eps:
        return Covariance(sigma, False, float(values[-1]))
    clipped = np.clip(values, eps, None)
    repaired = (vectors * clipped) @ vectors.T
    repaired = 0.5 * (repaired + repaired.T)
    return Covariance(repaired, True, float(sym_eigen(repaired).eigenvalues[-1]))


def equicorrelation(p, rho):
    r = np.full((p, p), float(rho))
    np.fill_diagonal(r, 1.0)
    return r


@dataclass(frozen=True)
class MixtureConfig:
    """``X ~ w * (equal mixture of Gaussian components) + (1 - w) * U[a, b]^p``.

    ``noise_bounds=None`` places the uniform background on the per-dimension
    range of the Gaussian rows actually drawn.
    """

    p: int
    n: int
    w: float = 1.0
    means: Sequence = None
    covariances: Sequence = None
    responses: Sequence = (ResponseSpec(1.0, 0.2),)
    noise_bounds: Optional[tuple] = None
    noise_response: ResponseSpec = ResponseSpec(0.0, 0.0)
    covariance_repaired: bool = False

    def __post_init__(self):
        if self.p < 1 or self.n < 1:
            raise ValidationError("p and n must be positive")
        if not 0.0 <= self.w <= 1.0:
            raise ValidationError(f"mixing weight w must lie in [0, 1], got {self.w}")
        covs = self.covariances if self.covariances is not None else [np.eye(self.p)]
        covs = tuple(np.asarray(c, dtype=float) for c in covs)
        means = self.means if self.means is not None else [np.zeros(self.p)] * len(covs)
        means = tuple(np.asarray(m, dtype=float).reshape(-1) for m in means)
        responses = tuple(ResponseSpec(*r) for r in self.responses)
        if len(responses) == 1 and len(covs) > 1:
            responses = responses * len(covs)
        if not len(means) == len(covs) == len(responses):
            raise ValidationError("means, covariances and responses need one entry per component")
        for m, c in zip(means, covs):
            if m.shape != (self.p,) or c.shape != (self.p, self.p):
                raise ValidationError("component mean/covariance dimension differs from p")
        for r in responses + (ResponseSpec(*self.noise_response),):
            if r.sigma < 0:
                raise ValidationError("response sigma must be nonnegative")
        if self.noise_bounds is not None:
            a, b = self.noise_bounds
            if not a < b:
                raise ValidationError(f"noise bounds need a < b, got ({a}, {b})")
        object.__setattr__(self, "covariances", covs)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "responses", responses)
        object.__setattr__(self, "noise_response", ResponseSpec(*self.noise_response))

    @classmethod
    def gaussian_design(cls, p, n=1000, mu=1.0, sigma=0.2, correlation=0.5, variances=None):
        """Single noise-free Gaussian target with a normal response.

        The predictor covariance is ``V^(1/2) R V^(1/2)`` with an
        equicorrelated ``R`` (off-diagonal ``correlation``) and unit variances
        unless ``variances`` is given.
        """
        variances = np.ones(p) if variances is None else variances
        cov = build_covariance(variances, equicorrelation(p, correlation))
        return cls(p=p, n=n, w=1.0, covariances=[cov.matrix],
                   responses=[ResponseSpec(mu, sigma)], covariance_repaired=cov.repaired)

    def to_dict(self):
        return {
            "p": self.p, "n": self.n, "w": self.w,
            "means": [m.tolist() for m in self.means],
            "covariances": [c.tolist() for c in self.covariances],
            "responses": [list(r) for r in self.responses],
            "noise_bounds": None if self.noise_bounds is None else list(self.noise_bounds),
            "noise_response": list(self.noise_response),
            "covariance_repaired": self.covariance_repaired,
        }


def sample_mixture(cfg: MixtureConfig, seed) -> Dataset:
    """Draw ``cfg.n`` independent rows.

    Draw order (fixed, so equal seeds give bit-identical output): component
    coin flips, target-component indices, standard normals (n x p), uniforms
    (n x p), response normals (n).
    """
    rng = make_rng(seed)
    n, p, groups = cfg.n, cfg.p, len(cfg.covariances)
    is_target = rng.random(n) < cfg.w
    component = rng.integers(0, groups, size=n)
    eps = rng.standard_normal((n, p))
    unif = rng.random((n, p))
    zeta = rng.standard_normal(n)

    X = np.empty((n, p))
    Z = np.empty(n)
    labels = np.where(is_target, component + 1, 0)
    for g in range(groups):
        rows = labels == g + 1
        X[rows] = cfg.means[g] + eps[rows] @ sym_sqrt(cfg.covariances[g])
        Z[rows] = cfg.responses[g].mu + cfg.responses[g].sigma * zeta[rows]

    noise = labels == 0
    metadata = {"seed": list(seed) if isinstance(seed, tuple) else seed,
                "covariance_repaired": cfg.covariance_repaired}
    if noise.any():
        if cfg.noise_bounds is not None:
            lo = np.full(p, float(cfg.noise_bounds[0]))
            hi = np.full(p, float(cfg.noise_bounds[1]))
            metadata["noise_bounds_source"] = "config"
        elif (~noise).any():
            lo, hi = X[~noise].min(axis=0), X[~noise].max(axis=0)
            metadata["noise_bounds_source"] = "gaussian-range"
        else:
            spread = np.array([3.0 * np.sqrt(np.diag(c)) for c in cfg.covariances])
            centers = np.array(cfg.means)
            lo, hi = (centers - spread).min(axis=0), (centers + spread).max(axis=0)
            metadata["noise_bounds_source"] = "three-sigma"
        X[noise] = lo + (hi - lo) * unif[noise]
        Z[noise] = cfg.noise_response.mu + cfg.noise_response.sigma * zeta[noise]
        metadata["noise_bounds"] = [lo.tolist(), hi.tolist()]
    return Dataset(X, Z, labels, metadata=metadata)


def standardized_means(X, batch):
    """Batch means of consecutive rows, centered and scaled by ``sqrt(batch)``.

    Leftover rows that do not fill a batch are dropped. The output rows have
    approximately the covariance of the input rows and are close to normal
    for large batches.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if batch < 1:
        raise ValidationError("batch size must be at least 1")
    if batch > n:
        raise DegenerateDataError(f"batch size {batch} exceeds the sample size {n}")
    k = n // batch
    used = X[: k * batch]
    means = used.reshape(k, batch, X.shape[1]).mean(axis=1)
    return math.sqrt(batch) * (means - used.mean(axis=0))


@dataclass(frozen=True)
class GaussianJointModel:
    """Joint normal model of ``(Z, X)`` or ``(Z, Y')``.

    Give ``eigenvalues`` for the PC parameterization (diagonal predictor
    covariance), otherwise ``covariance`` (identity when omitted).
    """

    sigma_z2: float
    cross_cov: np.ndarray
    mu_z: float = 0.0
    covariance: Optional[np.ndarray] = None
    eigenvalues: Optional[np.ndarray] = None


def conditional_moments(model: GaussianJointModel, x):
    """Mean and variance of ``Z`` given the predictors; the variance does not depend on ``x``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    cross = np.asarray(model.cross_cov, dtype=float).reshape(-1)
    if cross.shape != x.shape:
        raise ValidationError("cross-covariance and predictor vector differ in length")
    if model.eigenvalues is not None:
        lam = np.asarray(model.eigenvalues, dtype=float).reshape(-1)
        if lam.shape != x.shape:
            raise ValidationError("eigenvalue vector differs in length from the predictors")
        if np.any(lam < 0):
            raise ValidationError("eigenvalues must be nonnegative")
        zero = lam == 0
        if np.any(zero & (cross != 0)):
            raise SingularModelError("zero eigenvalue paired with a nonzero cross-covariance")
        coef = np.where(zero, 0.0, cross / np.where(zero, 1.0, lam))
    else:
        cov = np.eye(x.size) if model.covariance is None else np.asarray(model.covariance, float)
        values, vectors = sym_eigen(cov)
        if values[-1] < -1e-10 * max(1.0, abs(values[0])):
            raise ValidationError("predictor covariance is not positive semidefinite")
        proj = vectors.T @ cross
        zero = values <= 1e-12 * max(1.0, abs(values[0]))
        if np.any(zero & (np.abs(proj) > 1e-12 * max(1.0, np.abs(cross).max()))):
            raise SingularModelError("singular predictor covariance with cross-covariance in its null space")
        coef = vectors @ np.where(zero, 0.0, proj / np.where(zero, 1.0, values))
    mean = model.mu_z + float(coef @ x)
    variance = model.sigma_z2 - float(coef @ cross)
    if variance < -1e-12 * max(1.0, model.sigma_z2):
        raise ValidationError("implied joint covariance of (Z, X) is not positive semidefinite")
    return mean, max(variance, 0.0)


def sample_joint(model: GaussianJointModel, n, seed):
    """Draw ``(X, Z)`` from the joint normal model (predictor mean 0)."""
    cross = np.asarray(model.cross_cov, dtype=float).reshape(-1)
    p = cross.size
    if model.eigenvalues is not None:
        cov_x = np.diag(np.asarray(model.eigenvalues, dtype=float))
    else:
        cov_x = np.eye(p) if model.covariance is None else np.asarray(model.covariance, float)
    joint = np.empty((p + 1, p + 1))
    joint[0, 0] = model.sigma_z2
    joint[0, 1:] = joint[1:, 0] = cross
    joint[1:, 1:] = cov_x
    draws = make_rng(seed).standard_normal((n, p + 1)) @ sym_sqrt(joint)
    return Dataset(draws[:, 1:], model.mu_z + draws[:, 0])


def write_csv(data: Dataset, path, response="z", label_column="label"):
    """Write predictors, response and (if present) labels with a header row.

    Floats use ``repr`` so a write/load round trip is exact.
    """
    header = list(data.columns) + [response]
    if data.labels is not None and label_column:
        header.append(label_column)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(data.n):
            row = [repr(float(v)) for v in data.X[i]] + [repr(float(data.Z[i]))]
            if data.labels is not None and label_column:
                row.append(str(int(data.labels[i])))
            writer.writerow(row)


def load_csv(path, response="z", label_column="label") -> Dataset:
    """Read a header-first numeric CSV. ``response`` names the response column;
    ``label_column``, when present in the header, is read as integer labels
    rather than as a predictor."""
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or not any(h.strip() for h in header):
            raise DataParseError(f"{path}: empty file or missing header row", row=1)
        header = [h.strip() for h in header]
        if response not in header:
            raise ValidationError(f"{path}: response column {response!r} not in header {header}")
        z_col = header.index(response)
        l_col = header.index(label_column) if label_column and label_column in header else None
        x_cols = [j for j in range(len(header)) if j not in (z_col, l_col)]
        if not x_cols:
            raise DataError(f"{path}: no predictor columns")
        rows = []
        for line, record in enumerate(reader, start=2):
            if not record or all(not c.strip() for c in record):
                continue
            if len(record) != len(header):
                raise DataParseError(
                    f"{path}: line {line} has {len(record)} fields, expected {len(header)}", row=line)
            values = []
            for j, cell in enumerate(record):
                try:
                    v = float(cell)
                except ValueError:
                    v = math.nan
                if not math.isfinite(v):
                    raise DataParseError(
                        f"{path}: line {line}, column {header[j]!r}: {cell!r} is not a finite number",
                        row=line, column=header[j])
                values.append(v)
            rows.append(values)
    if not rows:
        raise DataParseError(f"{path}: no data rows", row=2)
    table = np.array(rows)
    labels = None if l_col is None else table[:, l_col].astype(np.int64)
    return Dataset(table[:, x_cols], table[:, z_col], labels,
                   columns=tuple(header[j] for j in x_cols),
                   metadata={"source": str(path)})
