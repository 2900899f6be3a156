"""Axis-aligned boxes and their empirical statistics."""

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import ValidationError


def _bound_to_json(v):
    return None if math.isinf(v) else float(v)


@dataclass(frozen=True, eq=False)
class AxisBox:
    """Closed hyperrectangle ``lower <= x <= upper``; infinite bounds allowed."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lower, dtype=float).reshape(-1)
        hi = np.array(self.upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise ValidationError("lower and upper bounds differ in length")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
            raise ValidationError("box bounds may not be NaN")
        if np.any(lo > hi):
            raise ValidationError("box has a lower bound above its upper bound")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    def __eq__(self, other):
        if not isinstance(other, AxisBox):
            return NotImplemented
        return np.array_equal(self.lower, other.lower) and np.array_equal(self.upper, other.upper)

    def __hash__(self):
        return hash((self.lower.tobytes(), self.upper.tobytes()))

    @classmethod
    def whole(cls, d):
        return cls(np.full(d, -np.inf), np.full(d, np.inf))

    @classmethod
    def bounding(cls, boxes):
        boxes = list(boxes)
        if not boxes:
            raise ValidationError("bounding box of no boxes")
        return cls(np.min([b.lower for b in boxes], axis=0),
                   np.max([b.upper for b in boxes], axis=0))

    @classmethod
    def of_points(cls, X):
        X = np.asarray(X, dtype=float)
        return cls(X.min(axis=0), X.max(axis=0))

    @property
    def dim(self):
        return self.lower.size

    @property
    def bounded(self):
        """Per-dimension flag: both sides finite."""
        return np.isfinite(self.lower) & np.isfinite(self.upper)

    @property
    def center(self):
        return 0.5 * (self.lower + self.upper)

    def contains(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.dim:
            raise ValidationError(f"points have {X.shape[1]} dimensions, box has {self.dim}")
        return np.all((X >= self.lower) & (X <= self.upper), axis=1)

    def includes(self, other: "AxisBox"):
        return bool(np.all(self.lower <= other.lower) and np.all(other.upper <= self.upper))

    def replace(self, dim, lower=None, upper=None):
        lo, hi = self.lower.copy(), self.upper.copy()
        if lower is not None:
            lo[dim] = lower
        if upper is not None:
            hi[dim] = upper
        return AxisBox(lo, hi)

    def clipped(self, frame: "AxisBox"):
        """Infinite sides replaced by ``frame``'s bounds (finite sides kept)."""
        lo = np.where(np.isinf(self.lower), frame.lower, self.lower)
        hi = np.where(np.isinf(self.upper), frame.upper, self.upper)
        return AxisBox(np.minimum(lo, hi), np.maximum(lo, hi))

    def to_dict(self):
        return {"lower": [_bound_to_json(v) for v in self.lower],
                "upper": [_bound_to_json(v) for v in self.upper]}

    @classmethod
    def from_dict(cls, d):
        lo = [-np.inf if v is None else v for v in d["lower"]]
        hi = [np.inf if v is None else v for v in d["upper"]]
        return cls(lo, hi)

    def write_csv(self, path, names=None):
        """One row per dimension: name, lower, upper (blank for unbounded)."""
        names = names or [f"x{j + 1}" for j in range(self.dim)]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["dimension", "lower", "upper"])
            for name, lo, hi in zip(names, self.lower, self.upper):
                writer.writerow([name, "" if math.isinf(lo) else repr(float(lo)),
                                 "" if math.isinf(hi) else repr(float(hi))])


@dataclass(frozen=True)
class BoxStats:
    """Empirical support ``F_n``, mean ``ave_n`` and mass ``I_n`` of a box over
    the active points. ``output_mean`` is NaN when the box holds no points."""

    count: int
    n_active: int
    support: float
    output_mean: float
    output_sum_fraction: float

    @property
    def empty(self):
        return self.count == 0

    def to_dict(self):
        return {"count": self.count, "n_active": self.n_active, "support": self.support,
                "output_mean": None if self.empty else self.output_mean,
                "output_sum_fraction": self.output_sum_fraction, "empty": self.empty}


def stats_from_mask(Z, inside, n_active: Optional[int] = None):
    """Stats for the points flagged by ``inside`` among ``n_active`` active points."""
    n_active = inside.size if n_active is None else n_active
    count = int(np.count_nonzero(inside))
    total = float(np.sum(Z[inside])) if count else 0.0
    return BoxStats(
        count=count,
        n_active=n_active,
        support=count / n_active,
        output_mean=total / count if count else math.nan,
        output_sum_fraction=total / n_active,
    )
