"""fastPRIM: central quantile boxes in input or principal-component space.

The closed form places every retained marginal at a central interval of
probability ``beta_T ** (1/p')``, so the box holds ``beta_T`` of the mass for
independent marginals. The iterative form peels all ``2p'`` faces at once and
covers, and exists to check the closed form against.
"""

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .boxes import AxisBox, BoxStats, stats_from_mask
from .datagen import Dataset
from .exceptions import DegenerateDataError, ValidationError
from .numkernel import empirical_quantile, normal_quantile, quantile_rank
from .pca import LinearRule, RotationModel, box_to_input_rule, fit_rotation, rotate

MODES = ("closed-form", "iterative")
CONVENTIONS = ("central", "literal")


def beta_total(beta, t):
    """Mass after ``t`` covering rounds of mass ``beta`` each: ``1 - (1 - beta)^t``."""
    if not 0.0 < beta < 1.0:
        raise ValidationError(f"beta must lie in (0, 1), got {beta}")
    if t < 1:
        raise ValidationError(f"t must be at least 1, got {t}")
    return 1.0 - (1.0 - beta) ** t


def quantile_levels(beta_t, p_prime, convention="central"):
    """Lower and upper marginal quantile levels for a box of mass ``beta_t``.

    ``"central"`` gives ``(1 -/+ b) / 2`` with ``b = beta_t ** (1/p')`` so each
    marginal interval carries ``b``. ``"literal"`` gives ``b/2`` and
    ``1 - b/2``, whose interval carries ``1 - b`` instead.
    """
    b = beta_t ** (1.0 / p_prime)
    if convention == "central":
        return 0.5 * (1.0 - b), 0.5 * (1.0 + b)
    if convention == "literal":
        return 0.5 * b, 1.0 - 0.5 * b
    raise ValidationError(f"quantile convention must be one of {CONVENTIONS}")


@dataclass(frozen=True)
class FastPrimConfig:
    beta: float = 0.05
    coverage: int = 20
    p_prime: Optional[int] = None  # None: peel every dimension
    mode: str = "closed-form"
    alpha: float = 0.05            # iterative mode only
    quantile_convention: str = "central"

    def __post_init__(self):
        beta_total(self.beta, self.coverage)
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.quantile_convention not in CONVENTIONS:
            raise ValidationError(f"quantile_convention must be one of {CONVENTIONS}")
        if not 0.0 < self.alpha < 1.0:
            raise ValidationError("alpha must lie in (0, 1)")
        if self.p_prime is not None and self.p_prime < 1:
            raise ValidationError("p_prime must be at least 1")

    @property
    def beta_t(self):
        return beta_total(self.beta, self.coverage)

    def resolve_p_prime(self, p):
        p_prime = p if self.p_prime is None else self.p_prime
        if p_prime > p:
            raise ValidationError(f"p_prime={p_prime} exceeds the dimension {p}")
        return p_prime

    def to_dict(self):
        return {"beta": self.beta, "coverage": self.coverage, "p_prime": self.p_prime,
                "mode": self.mode, "alpha": self.alpha,
                "quantile_convention": self.quantile_convention, "beta_t": self.beta_t}


def _dataset(data):
    return data if isinstance(data, Dataset) else Dataset(data, np.zeros(len(data)))


def central_box_empirical(data, config: FastPrimConfig, beta_t=None):
    """Box at marginal empirical quantiles of the first ``p'`` columns; the
    remaining columns stay unbounded. Returns ``(box, stats)``."""
    data = _dataset(data)
    beta_t = config.beta_t if beta_t is None else beta_t
    p_prime = config.resolve_p_prime(data.p)
    if data.n * beta_t ** (1.0 / p_prime) < 2:
        raise DegenerateDataError(
            f"n={data.n} is too small for a marginal of mass {beta_t ** (1.0 / p_prime):.3g}")
    q_lo, q_hi = quantile_levels(beta_t, p_prime, config.quantile_convention)
    lower = np.full(data.p, -np.inf)
    upper = np.full(data.p, np.inf)
    cols = np.sort(data.X[:, :p_prime], axis=0)
    for j in range(p_prime):
        lower[j] = empirical_quantile(cols[:, j], q_lo)
        upper[j] = empirical_quantile(cols[:, j], q_hi)
    box = AxisBox(lower, upper)
    return box, stats_from_mask(data.Z, box.contains(data.X))


def central_box_population(scale, beta_t, p_prime=None, center=None, convention="central"):
    """Population central box ``mu_j +/- sigma_j * z`` on the first ``p'`` axes.

    ``scale`` is a :class:`RotationModel` (PC axes, sigma = sqrt(lambda),
    centered at 0), a covariance matrix (sigma = sqrt of its diagonal) or a
    vector of standard deviations.
    """
    if isinstance(scale, RotationModel):
        sd = np.sqrt(scale.lambda_)
        p_prime = scale.p_prime if p_prime is None else p_prime
    else:
        s = np.asarray(scale, dtype=float)
        sd = np.sqrt(np.diag(s)) if s.ndim == 2 else s.reshape(-1)
    p = sd.size
    p_prime = p if p_prime is None else p_prime
    mu = np.zeros(p) if center is None else np.asarray(center, dtype=float)
    if not 0.0 <= beta_t <= 1.0:
        raise ValidationError("beta_t must lie in [0, 1]")
    lower = np.full(p, -np.inf)
    upper = np.full(p, np.inf)
    if beta_t == 0.0:
        z = 0.0
    elif beta_t == 1.0:
        z = math.inf
    else:
        _, q_hi = quantile_levels(beta_t, p_prime, convention)
        z = normal_quantile(q_hi) if q_hi < 1.0 else math.inf
        z = abs(z)
    lower[:p_prime] = mu[:p_prime] - sd[:p_prime] * z
    upper[:p_prime] = mu[:p_prime] + sd[:p_prime] * z
    return AxisBox(lower, upper)


@dataclass
class FastPrimTrace:
    """Rounds of the iterative variant plus the covered union."""

    n: int
    config: dict
    boxes: list = field(default_factory=list)
    round_stats: list = field(default_factory=list)   # relative to each round's active set
    round_rows: list = field(default_factory=list)
    trims: list = field(default_factory=list)

    @property
    def union_rows(self):
        return np.sort(np.concatenate(self.round_rows)) if self.round_rows else np.empty(0, int)

    @property
    def union_support(self):
        return self.union_rows.size / self.n

    @property
    def bounding_box(self):
        return AxisBox.bounding(self.boxes)

    def bounding_support(self, X):
        return float(np.mean(self.bounding_box.contains(X)))

    def hollow(self, X):
        """True when the bounding box holds points the union never covered."""
        return int(self.bounding_box.contains(X).sum()) > self.union_rows.size

    def to_dict(self):
        return {"n": self.n, "config": self.config, "trims": self.trims,
                "boxes": [{"round": k + 1, "box": b.to_dict(), "stats": s.to_dict()}
                          for k, (b, s) in enumerate(zip(self.boxes, self.round_stats))],
                "union_support": self.union_support,
                "bounding_box": self.bounding_box.to_dict() if self.boxes else None}


def _trim_round(X, inside, p_prime, share, target):
    """One peeling round on the points ``inside``; returns (lower, upper, inside, trims)."""
    lower = np.full(X.shape[1], -np.inf)
    upper = np.full(X.shape[1], np.inf)
    trims = 0
    face = 0
    stalled = 0
    while inside.size > target and stalled < 2 * p_prime:
        n_b = inside.size
        cols = np.ascontiguousarray(X[inside, :p_prime].T)
        if n_b - target > 2 * p_prime:
            # all 2p' faces at once, never aiming below the target
            m = min(quantile_rank(n_b, share), math.ceil((n_b - target) / (2 * p_prime)))
            part = np.partition(cols, (m, n_b - 1 - m), axis=1)
            lo, hi = part[:, m], part[:, n_b - 1 - m]
            keep = np.all((cols >= lo[:, None]) & (cols <= hi[:, None]), axis=0)
            if keep.all():
                break
            lower[:p_prime], upper[:p_prime] = lo, hi
        else:
            # close to the target: single points, cycling over the faces
            j, high = divmod(face, 2)
            face = (face + 1) % (2 * p_prime)
            col = cols[j]
            if high:
                bound = np.partition(col, n_b - 2)[n_b - 2]
                keep = col <= bound
            else:
                bound = np.partition(col, 1)[1]
                keep = col >= bound
            if keep.all():
                stalled += 1
                continue
            stalled = 0
            if high:
                upper[j] = bound
            else:
                lower[j] = bound
        inside = inside[keep]
        trims += 1
    return lower, upper, inside, trims


def fastprim_iterative(data, config: FastPrimConfig) -> FastPrimTrace:
    """Peel ``alpha/(2p')`` of the in-box points from every face of the first
    ``p'`` dimensions simultaneously until the round's support is at most
    ``beta``; then remove the round's points and repeat ``coverage`` times.

    Within ``2p'`` points of the target the round switches to removing one
    extreme point per face in turn, so it stops at most one point (plus ties)
    below ``beta``.
    """
    data = _dataset(data)
    p_prime = config.resolve_p_prime(data.p)
    if data.n * config.beta_t ** (1.0 / p_prime) < 2:
        raise DegenerateDataError("too few points for the requested box mass")
    share = config.alpha / (2.0 * p_prime)
    trace = FastPrimTrace(n=data.n, config=config.to_dict())
    active = np.arange(data.n)
    for _ in range(config.coverage):
        n_active = active.size
        if n_active == 0:
            break
        lower, upper, inside, trims = _trim_round(data.X, active, p_prime, share,
                                                  config.beta * n_active)
        trace.boxes.append(AxisBox(lower, upper))
        trace.round_stats.append(stats_from_mask(data.Z[inside], np.ones(inside.size, bool),
                                                 n_active))
        trace.round_rows.append(inside)
        trace.trims.append(trims)
        active = np.setdiff1d(active, inside, assume_unique=True)
    return trace


@dataclass
class FastPrimPCAResult:
    box: AxisBox            # in PC coordinates, unpeeled components unbounded
    rule: LinearRule        # same region on the original predictors
    stats: BoxStats
    rotation: RotationModel
    trace: Optional[FastPrimTrace] = None

    def to_dict(self):
        out = {"space": "pc", "box": self.box.to_dict(), "stats": self.stats.to_dict(),
               "rule": self.rule.to_list(), "rotation": self.rotation.to_dict()}
        if self.trace is not None:
            out["trace"] = self.trace.to_dict()
        return out

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)


def fastprim_pca(data, config: FastPrimConfig, rotation: Optional[RotationModel] = None):
    """Rotate to principal components, fit the central box on the leading
    ``p'`` components, leave the rest unbounded, and back-rotate to a rule."""
    data = _dataset(data)
    model = fit_rotation(data) if rotation is None else rotation
    rotated = rotate(data, model.with_p_prime(model.p))
    trace = None
    if config.mode == "closed-form":
        box, stats = central_box_empirical(rotated, config)
    else:
        trace = fastprim_iterative(rotated, config)
        box = trace.bounding_box
        stats = stats_from_mask(rotated.Z, box.contains(rotated.X))
    full = model.with_p_prime(model.p)
    return FastPrimPCAResult(box, box_to_input_rule(box, full), stats, full, trace)


class FastPRIM(BaseEstimator):
    """Scikit-learn style fastPRIM. ``y`` is optional: the box is placed from
    the predictors alone and the response only feeds ``stats_``.

    ``predict`` returns 1 for points inside the fitted box.
    """

    def __init__(self, beta=0.05, coverage=20, p_prime=None, mode="closed-form",
                 space="input", alpha=0.05, quantile_convention="central"):
        self.beta = beta
        self.coverage = coverage
        self.p_prime = p_prime
        self.mode = mode
        self.space = space
        self.alpha = alpha
        self.quantile_convention = quantile_convention

    def _config(self):
        return FastPrimConfig(self.beta, self.coverage, self.p_prime, self.mode, self.alpha,
                              self.quantile_convention)

    def fit(self, X, y=None):
        X = check_array(X, dtype=float, ensure_min_samples=2)
        z = np.zeros(X.shape[0]) if y is None else np.asarray(y, dtype=float).reshape(-1)
        if self.space not in ("input", "pc"):
            raise ValidationError(f"space must be 'input' or 'pc', got {self.space!r}")
        data = Dataset(X, z)
        config = self._config()
        self.n_features_in_ = X.shape[1]
        self.rotation_ = None
        self.rule_ = None
        self.trace_ = None
        if self.space == "pc":
            res = fastprim_pca(data, config)
            self.rotation_, self.box_, self.rule_, self.trace_ = (
                res.rotation, res.box, res.rule, res.trace)
            stats = res.stats
        elif config.mode == "closed-form":
            self.box_, stats = central_box_empirical(data, config)
        else:
            self.trace_ = fastprim_iterative(data, config)
            self.box_ = self.trace_.bounding_box
            stats = stats_from_mask(data.Z, self.box_.contains(data.X))
        self.stats_ = stats if y is not None else None
        self.support_ = stats.support
        return self

    def predict(self, X):
        check_is_fitted(self, "box_")
        X = check_array(X, dtype=float)
        if self.rotation_ is not None:
            X = rotate(X, self.rotation_)
        return self.box_.contains(X).astype(int)
