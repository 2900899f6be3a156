"""Box metrics, Gaussian population oracles, and the Monte-Carlo harness.

Volumes are carried on the log scale throughout; at p in the hundreds the
raw volume of any box leaves the double range. The volume-adjusted output
mean is reported as ``log(mean) - log(volume)``.
"""

import csv
import hashlib
import json
import math
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import List, NamedTuple, Optional, Sequence

import numpy as np

from .boxes import AxisBox
from .datagen import Dataset, MixtureConfig, derive_seed, sample_mixture
from .exceptions import BumpHuntError, NumericalError, ValidationError
from .fastprim import FastPrimConfig, beta_total, central_box_empirical
from .numkernel import chi2_quantile, sym_eigen
from .pca import fit_rotation, rotate
from .prim import PrimConfig, cover


class BoxVolume(NamedTuple):
    volume: float
    log_volume: float
    clipped: bool  # some unbounded side was measured on the fallback frame
    zero: bool     # some side has zero length


def box_volume(box: AxisBox, frame: Optional[AxisBox] = None) -> BoxVolume:
    """Product of side lengths; unbounded sides are measured on ``frame``."""
    clipped = not bool(np.all(box.bounded))
    if clipped:
        if frame is None:
            raise ValidationError("box has unbounded sides and no frame was supplied")
        box = box.clipped(frame)
    sides = box.upper - box.lower
    zero = bool(np.any(sides <= 0))
    log_volume = -math.inf if zero else float(np.sum(np.log(sides)))
    volume = 0.0 if zero else math.exp(log_volume) if log_volume < 709 else math.inf
    return BoxVolume(volume, log_volume, clipped, zero)


def _logsumexp(values):
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return -math.inf
    top = float(np.max(values))
    if not math.isfinite(top):
        return top
    return top + math.log(float(np.sum(np.exp(values - top))))


def mode_mass(data, box: AxisBox, density=None, log_density=None):
    """Empirical mode mass ``(1/n) * sum of f(X_i) over X_i in the box``.

    Pass ``density`` (values) or ``log_density`` (log values, for high p) as a
    callable on rows. With ``log_density`` the log of the mass is returned.
    """
    X = data.X if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    inside = box.contains(X)
    n = X.shape[0]
    if log_density is not None:
        if not inside.any():
            return -math.inf
        return _logsumexp(np.asarray(log_density(X[inside]), dtype=float)) - math.log(n)
    if density is None:
        raise ValidationError("mode_mass needs density or log_density")
    if not inside.any():
        return 0.0
    return float(np.sum(np.asarray(density(X[inside]), dtype=float))) / n


def gaussian_log_density(mean, variances):
    """Log density of independent normals; used on PC coordinates."""
    mean = np.asarray(mean, dtype=float)
    var = np.asarray(variances, dtype=float)
    const = -0.5 * float(np.sum(np.log(2.0 * math.pi * var)))

    def log_density(X):
        return const - 0.5 * np.sum((np.asarray(X) - mean) ** 2 / var, axis=1)

    return log_density


def unit_ball_log_volume(p):
    return 0.5 * p * math.log(math.pi) - math.lgamma(0.5 * p + 1.0)


@dataclass(frozen=True)
class EllipsoidBump:
    """Concentration ellipsoid ``{x: x' Sigma^-1 x <= q}`` of probability ``beta_prime``."""

    center: np.ndarray
    axes: np.ndarray         # columns = PC directions
    semi_axes: np.ndarray    # r_j = sqrt(lambda_j * q)
    beta_prime: float
    level: float             # q, the chi-square quantile

    @property
    def p(self):
        return self.semi_axes.size

    @property
    def log_volume(self):
        return unit_ball_log_volume(self.p) + float(np.sum(np.log(self.semi_axes)))

    @property
    def log_box_volume(self):
        """Log volume ``p log 2 + sum log r_j`` of the circumscribing box."""
        return self.p * math.log(2.0) + float(np.sum(np.log(self.semi_axes)))


def population_bump_box(sigma, beta_prime, center=None):
    """Concentration ellipsoid of ``N(center, sigma)`` with mass ``beta_prime``
    and its circumscribing box in PC coordinates (half-widths ``r_j``)."""
    if not 0.0 < beta_prime < 1.0:
        raise ValidationError("beta_prime must lie in (0, 1)")
    values, vectors = sym_eigen(sigma)
    if values[-1] <= 1e-12 * max(1.0, abs(values[0])):
        raise NumericalError("covariance matrix is singular")
    p = values.size
    q = chi2_quantile(beta_prime, p)
    r = np.sqrt(values * q)
    # a box needs strictly more room than the inscribed ellipsoid except in 1-d
    assert p * math.log(2.0) >= unit_ball_log_volume(p) - 1e-12
    center = np.zeros(p) if center is None else np.asarray(center, dtype=float)
    bump = EllipsoidBump(center, vectors, r, beta_prime, q)
    return bump, AxisBox(-r, r)


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


_DESIGN_SCHEMA = {
    "algorithms": "str_list", "spaces": "str_list", "p_values": "int_list",
    "coverages": "int_list", "replicates": "int", "master_seed": "int", "n": "int",
    "alpha": "number", "beta": "number", "mu": "number", "sigma": "number",
    "correlation": "number", "variances": "num_list", "paste": "bool", "threads": "int",
}


@dataclass(frozen=True)
class ExperimentDesign:
    """Grid of Monte-Carlo cells on the single-Gaussian response design."""

    algorithms: tuple = ("prim", "fastprim")
    spaces: tuple = ("input", "pc")
    p_values: tuple = (2,)
    coverages: tuple = (1, 5, 10, 15, 20)
    replicates: int = 8
    master_seed: int = 0
    n: int = 1000
    alpha: float = 0.05
    beta: float = 0.05
    mu: float = 1.0
    sigma: float = 0.2
    correlation: float = 0.5
    variances: Optional[tuple] = None
    paste: bool = False
    threads: int = 1

    def __post_init__(self):
        for name in ("algorithms", "spaces", "p_values", "coverages"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.variances is not None:
            object.__setattr__(self, "variances", tuple(self.variances))
        if set(self.algorithms) - {"prim", "fastprim"} or not self.algorithms:
            raise ValidationError(f"unknown algorithm in {self.algorithms}")
        if set(self.spaces) - {"input", "pc"} or not self.spaces:
            raise ValidationError(f"unknown space in {self.spaces}")
        if not self.p_values or min(self.p_values) < 1:
            raise ValidationError("p_values must be positive")
        if not self.coverages or min(self.coverages) < 1:
            raise ValidationError("coverages must be positive")
        if self.variances is not None and len(self.variances) < max(self.p_values):
            raise ValidationError("variances must cover the largest p")
        if self.replicates < 1 or self.n < 2 or self.threads < 1:
            raise ValidationError("replicates, n and threads must be positive")
        PrimConfig(self.alpha, self.beta, max(self.coverages), self.paste)

    @classmethod
    def from_dict(cls, d):
        """Build from a JSON-style mapping, checking key names and value types."""
        if not isinstance(d, dict):
            raise ValidationError("design must be a JSON object")
        unknown = set(d) - set(_DESIGN_SCHEMA)
        if unknown:
            raise ValidationError(f"unknown design keys: {sorted(unknown)}")
        for key, value in d.items():
            kind = _DESIGN_SCHEMA[key]
            if kind == "str_list":
                ok = isinstance(value, list) and all(isinstance(v, str) for v in value)
            elif kind == "int_list":
                ok = isinstance(value, list) and all(_is_int(v) for v in value)
            elif kind == "num_list":
                ok = value is None or (isinstance(value, list) and all(_is_num(v) for v in value))
            elif kind == "int":
                ok = _is_int(value)
            elif kind == "bool":
                ok = isinstance(value, bool)
            else:
                ok = _is_num(value)
            if not ok:
                raise ValidationError(f"design key {key!r} expects {kind.replace('_', ' ')}, "
                                      f"got {value!r}")
        return cls(**d)

    def to_dict(self):
        return asdict(self)

    def design_hash(self):
        d = self.to_dict()
        d.pop("threads")
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:10]

    def mixture(self, p):
        variances = None if self.variances is None else self.variances[:p]
        return MixtureConfig.gaussian_design(p, self.n, self.mu, self.sigma,
                                             self.correlation, variances)


@dataclass
class MetricsRecord:
    algorithm: str
    space: str
    p: int
    p_prime: int
    n: int
    coverage: int
    replicate: int
    seed: str
    support: float = math.nan
    output_mean: float = math.nan
    output_var: float = math.nan
    log_volume: float = math.nan
    volume: float = math.nan
    volume_clipped: bool = False
    log_vam: float = math.nan      # log(output mean) - log(volume)
    log_mode_mass: float = math.nan
    center_norm: float = math.nan
    seconds: float = math.nan
    error: Optional[str] = None

    @property
    def vam(self):
        return math.exp(self.log_vam) if self.log_vam < 709 else math.inf

    def key(self):
        return (self.algorithm, self.space, self.p, self.coverage)


TIMING_FIELDS = ("seconds",)


def _fill(rec, X, Z, rows, box, frame, log_density):
    sub = Z[rows]
    rec.support = rows.size / Z.size
    rec.output_mean = float(sub.mean()) if rows.size else math.nan
    rec.output_var = float(sub.var(ddof=1)) if rows.size > 1 else math.nan
    vol = box_volume(box, frame)
    rec.log_volume = vol.log_volume
    rec.volume = vol.volume
    rec.volume_clipped = vol.clipped
    rec.log_vam = (math.log(rec.output_mean) - vol.log_volume
                   if rec.output_mean > 0 and not vol.zero else math.nan)
    rec.log_mode_mass = (_logsumexp(log_density(X[rows])) - math.log(Z.size)
                         if rows.size else -math.inf)
    rec.center_norm = float(np.linalg.norm(box.clipped(frame).center))


def _run_cell(design: ExperimentDesign, replicate, p):
    seed = derive_seed(design.master_seed, replicate, p)
    data = sample_mixture(design.mixture(p), seed)
    max_t = max(design.coverages)
    records = []
    for space in design.spaces:
        for algorithm in design.algorithms:
            base = dict(algorithm=algorithm, space=space, p=p, p_prime=p, n=design.n,
                        replicate=replicate, seed=":".join(map(str, seed)))
            try:
                start = time.perf_counter()
                work = data
                if space == "pc":
                    model = fit_rotation(data)
                    work = rotate(data, model)
                    log_density = gaussian_log_density(np.zeros(p), np.maximum(model.lambda_, 1e-300))
                else:
                    cov = np.cov(data.X, rowvar=False).reshape(p, p)
                    values, vectors = sym_eigen(cov)
                    mean = data.X.mean(axis=0)
                    inner = gaussian_log_density(np.zeros(p), np.maximum(values, 1e-300))
                    log_density = (lambda X, v=vectors, m=mean, f=inner: f((X - m) @ v))
                prep = time.perf_counter() - start
                frame = AxisBox.of_points(work.X)
                if algorithm == "prim":
                    trace = cover(work, PrimConfig(design.alpha, design.beta, max_t, design.paste))
                    for k in design.coverages:
                        rec = MetricsRecord(coverage=k, **base)
                        if k > len(trace.rounds):
                            rec.error = f"covering stopped after {len(trace.rounds)} rounds"
                        else:
                            rows = trace.covered_rows(k)
                            box = AxisBox.bounding(r.box for r in trace.rounds[:k])
                            _fill(rec, work.X, work.Z, rows, box, frame, log_density)
                            rec.seconds = prep + sum(r.seconds for r in trace.rounds[:k])
                        records.append(rec)
                else:
                    for t in design.coverages:
                        rec = MetricsRecord(coverage=t, **base)
                        tic = time.perf_counter()
                        box, _ = central_box_empirical(work, FastPrimConfig(design.beta, t))
                        rows = np.flatnonzero(box.contains(work.X))
                        rec.seconds = prep + time.perf_counter() - tic
                        _fill(rec, work.X, work.Z, rows, box, frame, log_density)
                        records.append(rec)
            except (BumpHuntError, np.linalg.LinAlgError, FloatingPointError) as exc:
                for k in design.coverages:
                    records.append(MetricsRecord(coverage=k, error=f"{type(exc).__name__}: {exc}",
                                                 **base))
    return records


def _run_cell_args(args):
    return _run_cell(*args)


def run_experiment(design: ExperimentDesign, progress=None) -> List[MetricsRecord]:
    """One record per (replicate, p, space, algorithm, coverage).

    Each (replicate, p) pair draws one dataset from its derived seed, shared by
    every algorithm and space so the comparisons are paired. Failures are
    recorded on the affected records and the run continues.
    """
    cells = [(design, r, p) for p in design.p_values for r in range(design.replicates)]
    records = []
    if design.threads > 1:
        with ProcessPoolExecutor(max_workers=design.threads) as pool:
            for out in pool.map(_run_cell_args, cells):
                records.extend(out)
                if progress:
                    progress(len(records))
    else:
        for cell in cells:
            records.extend(_run_cell(*cell))
            if progress:
                progress(len(records))
    order = {(a, s): i for i, (a, s) in enumerate(
        (a, s) for s in design.spaces for a in design.algorithms)}
    records.sort(key=lambda r: (r.p, r.replicate, order[(r.algorithm, r.space)], r.coverage))
    return records


def _mean_se(values):
    values = [v for v in values if v is not None and math.isfinite(v)]
    if not values:
        return math.nan, math.nan
    mean = statistics.fmean(values)
    se = statistics.stdev(values) / math.sqrt(len(values)) if len(values) > 1 else math.nan
    return mean, se


def aggregate(records: Sequence[MetricsRecord]):
    """Mean and standard error of the mean per (algorithm, space, p, coverage)."""
    groups = {}
    for rec in records:
        groups.setdefault(rec.key(), []).append(rec)
    out = []
    for (algorithm, space, p, coverage), recs in sorted(groups.items()):
        ok = [r for r in recs if r.error is None]
        row = {"algorithm": algorithm, "space": space, "p": p, "coverage": coverage,
               "replicates": len(ok), "failures": len(recs) - len(ok)}
        for name in ("support", "output_mean", "log_volume", "log_vam", "log_mode_mass",
                     "seconds"):
            row[name], row[name + "_se"] = _mean_se([getattr(r, name) for r in ok])
        row["log_mean_vam"] = (_logsumexp([r.log_vam for r in ok]) - math.log(len(ok))
                               if ok else math.nan)
        row["vam_var"] = (statistics.variance([r.vam for r in ok]) if len(ok) > 1 else math.nan)
        row["output_mean_var"] = (statistics.variance([r.output_mean for r in ok])
                                  if len(ok) > 1 else math.nan)
        out.append(row)
    return out


def _ratio_of_means(log_a, log_b):
    """Ratio of means of exp(log_a) over exp(log_b) with a delta-method SE
    (paired replicates), evaluated on a shifted scale to avoid overflow."""
    log_a, log_b = np.asarray(log_a), np.asarray(log_b)
    n = log_a.size
    ca, cb = float(log_a.max()), float(log_b.max())
    a, b = np.exp(log_a - ca), np.exp(log_b - cb)
    ma, mb = float(a.mean()), float(b.mean())
    log_ratio = ca - cb + math.log(ma) - math.log(mb)
    if n < 2:
        return log_ratio, math.nan
    va, vb = float(a.var(ddof=1)), float(b.var(ddof=1))
    cab = float(np.cov(a, b, ddof=1)[0, 1])
    rel_var = (va / ma ** 2 + vb / mb ** 2 - 2.0 * cab / (ma * mb)) / n
    return log_ratio, math.sqrt(max(rel_var, 0.0))  # SE of the ratio relative to the ratio


def gain_profile(records: Sequence[MetricsRecord]):
    """PC over input ratio of volume-adjusted output means per (algorithm, p, coverage).

    ``ratio`` is the ratio of replicate means with SE ``ratio * rel_se`` from the
    delta method; ``mean_log_ratio`` averages per-replicate log ratios and
    ``frac_gain`` is the share of replicates whose ratio exceeds 1.
    """
    by_key = {}
    for rec in records:
        if rec.error is None and math.isfinite(rec.log_vam):
            by_key[(rec.algorithm, rec.p, rec.coverage, rec.space, rec.replicate)] = rec
    cells = sorted({(r.algorithm, r.p, r.coverage) for r in records})
    out = []
    for algorithm, p, coverage in cells:
        reps = sorted({r.replicate for r in records})
        pairs = [(by_key[(algorithm, p, coverage, "pc", r)], by_key[(algorithm, p, coverage, "input", r)])
                 for r in reps
                 if (algorithm, p, coverage, "pc", r) in by_key
                 and (algorithm, p, coverage, "input", r) in by_key]
        row = {"algorithm": algorithm, "p": p, "coverage": coverage, "pairs": len(pairs)}
        if not pairs:
            row.update(status="missing", ratio=math.nan, ratio_se=math.nan, log_ratio=math.nan,
                       mean_log_ratio=math.nan, mean_log_ratio_se=math.nan, frac_gain=math.nan)
            out.append(row)
            continue
        log_ratio, rel_se = _ratio_of_means([a.log_vam for a, _ in pairs],
                                            [b.log_vam for _, b in pairs])
        ratio = math.exp(log_ratio) if log_ratio < 709 else math.inf
        diffs = [a.log_vam - b.log_vam for a, b in pairs]
        mlr, mlr_se = _mean_se(diffs)
        row.update(status="ok", ratio=ratio, ratio_se=ratio * rel_se, log_ratio=log_ratio,
                   mean_log_ratio=mlr, mean_log_ratio_se=mlr_se,
                   frac_gain=sum(d > 0 for d in diffs) / len(diffs))
        out.append(row)
    return out


def timing_harness(task, repetitions=8):
    """Mean and SE of wall-clock seconds over ``repetitions`` timed calls of
    ``task()``; one extra warm-up call beforehand is not timed."""
    if repetitions < 3:
        raise ValidationError("timing needs at least 3 repetitions")
    task()
    times = []
    for _ in range(repetitions):
        start = time.perf_counter()
        task()
        times.append(max(time.perf_counter() - start, 0.0))
    return statistics.fmean(times), statistics.stdev(times) / math.sqrt(len(times))


RECORD_FIELDS = [f.name for f in fields(MetricsRecord)]


def write_results(records, design: ExperimentDesign, out_dir):
    """Write the tidy CSV and JSON summary; returns their paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{design.design_hash()}_seed{design.master_seed}"
    csv_path = out_dir / f"results_{stem}.csv"
    json_path = out_dir / f"summary_{stem}.json"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=RECORD_FIELDS)
        writer.writeheader()
        for rec in records:
            writer.writerow({k: ("" if v is None else v) for k, v in asdict(rec).items()})
    summary = {
        "design": design.to_dict(),
        "design_hash": design.design_hash(),
        "beta_t": {t: beta_total(design.beta, t) for t in design.coverages},
        "aggregates": aggregate(records),
        "gain_profile": gain_profile(records),
        "failures": [asdict(r) for r in records if r.error is not None],
    }
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(summary), fh, indent=2)
    return csv_path, json_path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, (np.floating, np.integer)):
        return _jsonable(obj.item())
    return obj


def read_results(path) -> List[MetricsRecord]:
    types = {f.name: f.type for f in fields(MetricsRecord)}
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            kwargs = {}
            for k, v in row.items():
                if k in ("algorithm", "space", "seed"):
                    kwargs[k] = v
                elif k == "error":
                    kwargs[k] = v or None
                elif k == "volume_clipped":
                    kwargs[k] = v == "True"
                elif k in ("p", "p_prime", "n", "coverage", "replicate"):
                    kwargs[k] = int(v)
                else:
                    kwargs[k] = float(v) if v != "" else math.nan
            out.append(MetricsRecord(**kwargs))
    return out
