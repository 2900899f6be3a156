"""Principal-component rotation of predictors and back-rotation of PC boxes
into linear-combination rules on the original predictors."""

import json
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .boxes import AxisBox
from .datagen import Dataset
from .exceptions import DegenerateDataError, ValidationError
from .numkernel import sym_eigen


def project(X_centered, vectors):
    """``X_centered @ vectors`` computed one column at a time.

    Each output column depends only on its own coefficient vector, so a rule
    holding a subset of the vectors reproduces the rotation bit for bit.
    """
    out = np.empty((X_centered.shape[0], vectors.shape[1]))
    for j in range(vectors.shape[1]):
        out[:, j] = (X_centered * vectors[:, j]).sum(axis=1)
    return out


@dataclass(frozen=True)
class RotationModel:
    center: np.ndarray
    gamma: np.ndarray    # eigenvectors as columns, descending eigenvalue order
    lambda_: np.ndarray  # eigenvalues, nonincreasing
    p_prime: int

    @property
    def p(self):
        return self.center.size

    def with_p_prime(self, p_prime):
        if not 1 <= p_prime <= self.p:
            raise ValidationError(f"p' must lie in [1, {self.p}], got {p_prime}")
        return RotationModel(self.center, self.gamma, self.lambda_, int(p_prime))

    def to_dict(self):
        return {"center": self.center.tolist(), "gamma": self.gamma.tolist(),
                "lambda": self.lambda_.tolist(), "p_prime": self.p_prime}


def _matrix(data):
    return data.X if isinstance(data, Dataset) else np.asarray(data, dtype=float)


def fit_rotation(data, p_prime: Optional[int] = None) -> RotationModel:
    """Center on column means and rotate onto the eigenvectors of the sample
    covariance (divisor n - 1). All p components are kept unless ``p_prime``."""
    X = _matrix(data)
    if X.ndim != 2 or X.shape[0] < 2:
        raise DegenerateDataError("fitting a rotation needs at least 2 rows")
    center = X.mean(axis=0)
    Xc = X - center
    cov = (Xc.T @ Xc) / (X.shape[0] - 1)
    values, vectors = sym_eigen(0.5 * (cov + cov.T))
    values = np.clip(values, 0.0, None)
    model = RotationModel(center, vectors, values, X.shape[1])
    return model if p_prime is None else model.with_p_prime(p_prime)


def rotate(data, model: RotationModel):
    """Rows ``gamma^T (x - center)``, truncated to the first ``p'`` coordinates."""
    X = _matrix(data)
    if X.shape[1] != model.p:
        raise ValidationError(f"data has {X.shape[1]} columns, rotation expects {model.p}")
    Y = project(X - model.center, model.gamma[:, : model.p_prime])
    if isinstance(data, Dataset):
        return Dataset(Y, data.Z, data.labels,
                       columns=tuple(f"y{j + 1}" for j in range(model.p_prime)),
                       metadata=dict(data.metadata))
    return Y


def inverse_rotate(Y, model: RotationModel):
    Y = np.asarray(Y, dtype=float)
    return Y @ model.gamma[:, : Y.shape[1]].T + model.center


@dataclass(frozen=True)
class LinearConstraint:
    coefficients: np.ndarray
    lower: Optional[float]
    upper: Optional[float]


@dataclass(frozen=True)
class LinearRule:
    """Conjunction of ``lower_j <= coef_j . (x - center) <= upper_j``."""

    center: np.ndarray
    constraints: List[LinearConstraint]

    def contains(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        inside = np.ones(X.shape[0], dtype=bool)
        if not self.constraints:
            return inside
        coef = np.column_stack([c.coefficients for c in self.constraints])
        proj = project(X - self.center, coef)
        for j, c in enumerate(self.constraints):
            if c.lower is not None:
                inside &= proj[:, j] >= c.lower
            if c.upper is not None:
                inside &= proj[:, j] <= c.upper
        return inside

    def to_list(self):
        """Bounds re-expressed on ``coef . x`` (center folded in) for export."""
        out = []
        for c in self.constraints:
            shift = float(c.coefficients @ self.center)
            out.append({
                "coefficients": c.coefficients.tolist(),
                "lower": None if c.lower is None else c.lower + shift,
                "upper": None if c.upper is None else c.upper + shift,
            })
        return out

    def to_json(self, **kwargs):
        return json.dumps(self.to_list(), **kwargs)

    @classmethod
    def from_list(cls, items):
        constraints = [LinearConstraint(np.asarray(d["coefficients"], dtype=float),
                                        d.get("lower"), d.get("upper")) for d in items]
        p = constraints[0].coefficients.size if constraints else 0
        return cls(np.zeros(p), constraints)

    def describe(self, names=None, precision=4):
        lines = []
        for c in self.constraints:
            names = names or [f"x{k + 1}" for k in range(c.coefficients.size)]
            shift = float(c.coefficients @ self.center)
            terms = " ".join(f"{'+' if w >= 0 else '-'} {abs(w):.{precision}f}*{nm}"
                             for w, nm in zip(c.coefficients, names) if abs(w) > 10 ** -precision)
            if terms.startswith("+ "):
                terms = terms[2:]
            elif terms.startswith("- "):
                terms = "-" + terms[2:]
            lo = "" if c.lower is None else f"{c.lower + shift:.{precision}f} <= "
            hi = "" if c.upper is None else f" <= {c.upper + shift:.{precision}f}"
            lines.append(f"{lo}{terms}{hi}")
        return "\n".join(lines) if lines else "(no constraints: whole space)"


def box_to_input_rule(box: AxisBox, model: RotationModel) -> LinearRule:
    if box.dim != model.p_prime:
        raise ValidationError(f"box has {box.dim} dimensions, rotation keeps {model.p_prime}")
    constraints = []
    for j in range(box.dim):
        lo, hi = box.lower[j], box.upper[j]
        if np.isinf(lo) and np.isinf(hi):
            continue
        constraints.append(LinearConstraint(
            model.gamma[:, j].copy(),
            None if np.isinf(lo) else float(lo),
            None if np.isinf(hi) else float(hi),
        ))
    return LinearRule(model.center.copy(), constraints)


class PCARotation(TransformerMixin, BaseEstimator):
    """Transformer wrapper around :func:`fit_rotation` / :func:`rotate`.

    Parameters
    ----------
    n_components : int or None
        Number of leading components kept (``p'``); ``None`` keeps all.
    """

    def __init__(self, n_components=None):
        self.n_components = n_components

    def fit(self, X, y=None):
        X = check_array(X, dtype=float, ensure_min_samples=2)
        self.model_ = fit_rotation(X, self.n_components)
        self.n_features_in_ = X.shape[1]
        self.center_ = self.model_.center
        self.components_ = self.model_.gamma[:, : self.model_.p_prime].T
        self.explained_variance_ = self.model_.lambda_[: self.model_.p_prime]
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=float)
        return rotate(X, self.model_)

    def inverse_transform(self, Y):
        check_is_fitted(self, "model_")
        return inverse_rotate(check_array(Y, dtype=float), self.model_)
