"""Patient Rule Induction Method: greedy peeling, optional pasting, covering.

Active point sets are integer index arrays into the dataset rows.
"""

import json
import math
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .boxes import AxisBox, BoxStats, stats_from_mask
from .datagen import Dataset
from .exceptions import DegenerateDataError, ValidationError
from .numkernel import quantile_rank
from .pca import box_to_input_rule, fit_rotation, rotate

PEEL_CRITERIA = ("min_removed", "max_mean")


@dataclass(frozen=True)
class PrimConfig:
    """``alpha`` peel fraction, ``beta`` minimal box support, ``coverage`` rounds.

    ``rho=None`` accepts a covering box when its mean reaches the global mean
    of the response. ``peel_criterion="min_removed"`` removes the candidate
    with the least response mass; ``"max_mean"`` keeps the candidate whose
    remaining box has the highest mean.
    """

    alpha: float = 0.05
    beta: float = 0.05
    coverage: int = 20
    paste: bool = False
    rho: Optional[float] = None
    peel_criterion: str = "min_removed"

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValidationError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0.0 < self.beta < 1.0:
            raise ValidationError(f"beta must lie in (0, 1), got {self.beta}")
        if int(self.coverage) != self.coverage or self.coverage < 1:
            raise ValidationError(f"coverage must be a positive integer, got {self.coverage}")
        if self.peel_criterion not in PEEL_CRITERIA:
            raise ValidationError(f"peel_criterion must be one of {PEEL_CRITERIA}")

    @property
    def min_active(self):
        """Covering stops once fewer active points than this remain."""
        return math.ceil(round(10.0 / self.beta, 9))

    def to_dict(self):
        return {"alpha": self.alpha, "beta": self.beta, "coverage": self.coverage,
                "paste": self.paste, "rho": self.rho, "peel_criterion": self.peel_criterion}


def max_peels(alpha, beta):
    """Smallest ``L`` with ``(1 - alpha)^L <= beta``."""
    return math.ceil(math.log(beta) / math.log(1.0 - alpha))


def _active_index(data: Dataset, active):
    if active is None:
        return np.arange(data.n)
    active = np.asarray(active)
    if active.dtype == bool:
        return np.flatnonzero(active)
    return active.astype(np.intp)


def box_stats(data: Dataset, active, box: AxisBox) -> BoxStats:
    idx = _active_index(data, active)
    if idx.size == 0:
        raise DegenerateDataError("box statistics need at least one active point")
    inside = box.contains(data.X[idx])
    return stats_from_mask(data.Z[idx], inside)


@dataclass(frozen=True)
class PeelCandidate:
    dimension: int
    side: str          # "low" or "high"
    threshold: float   # new bound on that side
    removed_count: int
    removed_sum: float
    remaining_count: int
    remaining_sum: float
    box: AxisBox

    @property
    def void(self):
        return self.removed_count == 0

    @property
    def remaining_mean(self):
        return self.remaining_sum / self.remaining_count if self.remaining_count else -math.inf


def _candidates_from_points(Xb, Zb, box, alpha):
    # Each side removes the ceil(alpha*n_b) most extreme order statistics:
    # low side drops x_j < x_(m+1), high side drops x_j > x_(n_b-m); ties at
    # the threshold survive, so a constant marginal gives void candidates.
    n_b, d = Xb.shape
    m = quantile_rank(n_b, alpha)
    out = []
    if m >= n_b:
        for j in range(d):
            for side in ("low", "high"):
                out.append(PeelCandidate(j, side, math.nan, 0, 0.0, n_b, float(Zb.sum()), box))
        return out
    cols = np.ascontiguousarray(Xb.T)
    part = np.partition(cols, (m, n_b - 1 - m), axis=1)
    low_thr = part[:, m]
    high_thr = part[:, n_b - 1 - m]
    low_mask = cols < low_thr[:, None]
    high_mask = cols > high_thr[:, None]
    low_sum = low_mask @ Zb
    high_sum = high_mask @ Zb
    low_cnt = low_mask.sum(axis=1)
    high_cnt = high_mask.sum(axis=1)
    total = float(Zb.sum())
    for j in range(d):
        for side, thr, cnt, s in (("low", low_thr[j], low_cnt[j], low_sum[j]),
                                  ("high", high_thr[j], high_cnt[j], high_sum[j])):
            cnt = int(cnt)
            new_box = box if cnt == 0 else (
                box.replace(j, lower=thr) if side == "low" else box.replace(j, upper=thr))
            out.append(PeelCandidate(j, side, float(thr), cnt, float(s), n_b - cnt,
                                     total - float(s), new_box))
    return out


def peel_candidates(data: Dataset, active, box: AxisBox, alpha) -> List[PeelCandidate]:
    """The 2d candidate peels of ``box``, ordered (dim 0 low, dim 0 high, dim 1 low, ...)."""
    idx = _active_index(data, active)
    inside = idx[box.contains(data.X[idx])]
    if inside.size == 0:
        raise DegenerateDataError("cannot peel an empty box")
    return _candidates_from_points(data.X[inside], data.Z[inside], box, alpha)


def choose_candidate(candidates, criterion="min_removed"):
    """Best non-void candidate; ties keep the earliest (lowest dimension, low side first)."""
    best, best_key = None, None
    for cand in candidates:
        if cand.void:
            continue
        key = cand.removed_sum if criterion == "min_removed" else -cand.remaining_mean
        if best is None or key < best_key:
            best, best_key = cand, key
    return best


def peel_step(data: Dataset, active, box: AxisBox, alpha, criterion="min_removed"):
    """Return ``(candidate, new_box)``, or ``None`` when every candidate is void."""
    cand = choose_candidate(peel_candidates(data, active, box, alpha), criterion)
    return None if cand is None else (cand, cand.box)


@dataclass
class PeelResult:
    box: AxisBox
    stats: BoxStats
    steps: list
    inside: np.ndarray  # dataset row indices of the active points in the box


def peel_to_support(data: Dataset, active, config: PrimConfig) -> PeelResult:
    """Peel from the unbounded box while one more peel keeps the support at or
    above ``beta``, i.e. while ``(1 - alpha) * support >= beta``."""
    idx = _active_index(data, active)
    n_active = idx.size
    if n_active < math.ceil(round(1.0 / config.beta, 9)):
        raise DegenerateDataError(
            f"{n_active} active points is too few for beta={config.beta}")
    box = AxisBox.whole(data.p)
    inside = idx
    Xb, Zb = data.X[inside], data.Z[inside]
    steps = []
    while (1.0 - config.alpha) * inside.size / n_active >= config.beta:
        cand = choose_candidate(_candidates_from_points(Xb, Zb, box, config.alpha),
                                config.peel_criterion)
        if cand is None:
            break
        col = Xb[:, cand.dimension]
        keep = col >= cand.threshold if cand.side == "low" else col <= cand.threshold
        inside, Xb, Zb = inside[keep], Xb[keep], Zb[keep]
        box = cand.box
        stats = stats_from_mask(Zb, np.ones(inside.size, dtype=bool), n_active)
        steps.append({"action": "peel", "dimension": cand.dimension, "side": cand.side,
                      "value": cand.threshold, "removed": cand.removed_count,
                      "stats": stats.to_dict()})
    stats = stats_from_mask(Zb, np.ones(inside.size, dtype=bool), n_active)
    return PeelResult(box, stats, steps, inside)


def _paste_candidates(X, Z, box, alpha):
    within = (X >= box.lower) & (X <= box.upper)
    violations = (~within).sum(axis=1)
    inside = violations == 0
    count = int(inside.sum())
    m = max(1, math.ceil(round(alpha * count, 9)))
    base_sum = float(Z[inside].sum())
    out = []
    for j in range(box.dim):
        others_ok = (violations - (~within[:, j])) == 0
        col = X[:, j]
        for side in ("low", "high"):
            if side == "low":
                pool = others_ok & (col < box.lower[j])
                if not pool.any():
                    continue
                vals = np.sort(col[pool])[::-1]
                bound = vals[min(m, vals.size) - 1]
                added = pool & (col >= bound)
                new_box = box.replace(j, lower=bound)
            else:
                pool = others_ok & (col > box.upper[j])
                if not pool.any():
                    continue
                vals = np.sort(col[pool])
                bound = vals[min(m, vals.size) - 1]
                added = pool & (col <= bound)
                new_box = box.replace(j, upper=bound)
            n_new = count + int(added.sum())
            mean = (base_sum + float(Z[added].sum())) / n_new
            out.append((j, side, float(bound), int(added.sum()), mean, new_box))
    current = base_sum / count if count else -math.inf
    return current, out


def paste_step(data: Dataset, active, box: AxisBox, alpha):
    """One pasting move: the face enlargement (by ``ceil(alpha * count)`` nearest
    outside points) with the highest mean, if that mean beats the current one.
    Returns ``None`` when no enlargement improves the mean."""
    idx = _active_index(data, active)
    current, cands = _paste_candidates(data.X[idx], data.Z[idx], box, alpha)
    best = None
    for cand in cands:
        if best is None or cand[4] > best[4]:
            best = cand
    if best is None or not best[4] > current:
        return None
    j, side, bound, added, mean, new_box = best
    return {"action": "paste", "dimension": j, "side": side, "value": bound,
            "added": added, "mean": mean}, new_box


def paste(data: Dataset, active, box: AxisBox, alpha):
    """Repeat :func:`paste_step` until no move improves; returns ``(box, steps)``."""
    steps = []
    idx = _active_index(data, active)
    while True:
        res = paste_step(data, idx, box, alpha)
        if res is None:
            return box, steps
        step, box = res
        steps.append(step)


@dataclass
class CoverRound:
    index: int
    box: AxisBox
    stats: BoxStats        # relative to this round's active set
    accepted: bool
    n_active: int
    peels: int
    paste_iterations: int
    seconds: float
    rows: np.ndarray       # dataset rows captured (and removed) by this round

    def to_dict(self):
        return {"round": self.index, "box": self.box.to_dict(), "stats": self.stats.to_dict(),
                "accepted": self.accepted, "n_active": self.n_active, "peels": self.peels,
                "paste_iterations": self.paste_iterations, "seconds": self.seconds}


@dataclass
class BoxTrace:
    n: int
    rho: float
    config: dict
    steps: list = field(default_factory=list)
    rounds: List[CoverRound] = field(default_factory=list)
    stop_reason: str = "coverage reached"

    @property
    def accepted_boxes(self):
        return [r.box for r in self.rounds if r.accepted]

    def covered_rows(self, k=None, accepted_only=False):
        """Rows captured by rounds ``1..k`` (all rounds when ``k`` is None)."""
        rounds = self.rounds if k is None else self.rounds[:k]
        parts = [r.rows for r in rounds if r.accepted or not accepted_only]
        return np.sort(np.concatenate(parts)) if parts else np.empty(0, dtype=np.intp)

    def cumulative_support(self, k=None):
        return self.covered_rows(k).size / self.n

    def region_contains(self, X):
        """Membership in the union of accepted boxes."""
        X = np.asarray(X, dtype=float)
        inside = np.zeros(X.shape[0], dtype=bool)
        for box in self.accepted_boxes:
            inside |= box.contains(X)
        return inside

    def to_dict(self):
        return {"n": self.n, "rho": self.rho, "config": self.config,
                "stop_reason": self.stop_reason, "steps": self.steps,
                "boxes": [r.to_dict() for r in self.rounds]}

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)


def cover(data: Dataset, config: PrimConfig) -> BoxTrace:
    """Peel (and paste) up to ``coverage`` times, removing each round's box
    points before the next round. A round's box is accepted into the final
    region when its mean over that round's active points is at least rho."""
    if data.n * config.beta < 10:
        raise DegenerateDataError(
            f"n * beta = {data.n * config.beta:g} < 10; too few points to cover")
    rho = float(np.mean(data.Z)) if config.rho is None else float(config.rho)
    trace = BoxTrace(n=data.n, rho=rho, config=config.to_dict())
    active = np.arange(data.n)
    for k in range(1, config.coverage + 1):
        if active.size < config.min_active:
            trace.stop_reason = f"fewer than {config.min_active} active points"
            break
        start = time.perf_counter()
        peeled = peel_to_support(data, active, config)
        box, inside, stats = peeled.box, peeled.inside, peeled.stats
        for step in peeled.steps:
            trace.steps.append({"round": k, **step})
        paste_steps = []
        if config.paste:
            box, paste_steps = paste(data, active, box, config.alpha)
            mask = box.contains(data.X[active])
            inside = active[mask]
            stats = stats_from_mask(data.Z[active], mask)
            for step in paste_steps:
                trace.steps.append({"round": k, **step})
        accepted = (not stats.empty) and stats.output_mean >= rho
        trace.steps.append({"round": k, "action": "accept-box" if accepted else "reject-box",
                            "stats": stats.to_dict()})
        trace.rounds.append(CoverRound(k, box, stats, accepted, active.size, len(peeled.steps),
                                       len(paste_steps), time.perf_counter() - start, inside))
        active = np.setdiff1d(active, inside, assume_unique=True)
    return trace


class PRIM(BaseEstimator):
    """Scikit-learn style PRIM bump hunter.

    ``space="pc"`` fits a full principal-component rotation first and hunts in
    the rotated coordinates; ``rules_`` then holds the accepted boxes as linear
    rules on the original predictors. ``predict`` returns 1 for points inside
    the union of accepted boxes.
    """

    def __init__(self, alpha=0.05, beta=0.05, coverage=20, paste=False, rho=None,
                 peel_criterion="min_removed", space="input"):
        self.alpha = alpha
        self.beta = beta
        self.coverage = coverage
        self.paste = paste
        self.rho = rho
        self.peel_criterion = peel_criterion
        self.space = space

    def _config(self):
        return PrimConfig(self.alpha, self.beta, self.coverage, self.paste, self.rho,
                          self.peel_criterion)

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        if self.space not in ("input", "pc"):
            raise ValidationError(f"space must be 'input' or 'pc', got {self.space!r}")
        data = Dataset(X, y)
        self.n_features_in_ = X.shape[1]
        self.rotation_ = None
        if self.space == "pc":
            self.rotation_ = fit_rotation(data)
            data = rotate(data, self.rotation_)
        self.trace_ = cover(data, self._config())
        self.boxes_ = [r.box for r in self.trace_.rounds]
        self.accepted_ = [r.accepted for r in self.trace_.rounds]
        self.rules_ = None if self.rotation_ is None else [
            box_to_input_rule(b, self.rotation_) for b in self.trace_.accepted_boxes]
        return self

    def _to_space(self, X):
        return X if self.rotation_ is None else rotate(X, self.rotation_)

    def predict(self, X):
        check_is_fitted(self, "trace_")
        X = check_array(X, dtype=float)
        return self.trace_.region_contains(self._to_space(X)).astype(int)
