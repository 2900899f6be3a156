"""Numeric primitives: symmetric eigensolver, matrix square root, Cholesky,
order-statistic quantiles, and the normal / chi-square quantile functions.

Everything here is a pure function of its arguments.
"""

import math
from typing import NamedTuple

import numba
import numpy as np

from .exceptions import ConvergenceError, NotPSDError, ValidationError

SYMMETRY_RTOL = 1e-12
PSD_ATOL = 1e-10
MAX_SWEEPS = 100


class EigenDecomposition(NamedTuple):
    eigenvalues: np.ndarray   # descending
    eigenvectors: np.ndarray  # columns


def check_symmetric(m, rtol=SYMMETRY_RTOL):
    """Return ``m`` as a float array symmetrized, or raise if it is not symmetric."""
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError("matrix has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    asym = float(np.max(np.abs(a - a.T))) if a.size else 0.0
    if asym > rtol * scale:
        raise ValidationError(
            f"matrix is not symmetric: max |m - m^T| = {asym:.3e} exceeds {rtol:.0e} relative"
        )
    return 0.5 * (a + a.T)


@numba.njit(cache=True)
def _jacobi_sweeps(a, v, tol, max_sweeps):
    # Cyclic row-by-row Jacobi; returns the number of sweeps used, or -1.
    n = a.shape[0]
    norm = math.sqrt(np.sum(a * a))
    if norm == 0.0:
        return 0
    for sweep in range(1, max_sweeps + 1):
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-18 * norm:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    sign = 1.0 if theta >= 0.0 else -1.0
                    t = sign / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                a[p, q] = 0.0
                a[q, p] = 0.0
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq
        off = 0.0
        for i in range(n):
            for j in range(n):
                if i != j:
                    off += a[i, j] * a[i, j]
        if math.sqrt(off) <= tol * norm:
            return sweep
    return -1


def _jacobi(a, max_sweeps=MAX_SWEEPS, tol=1e-14):
    v = np.eye(a.shape[0])
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.shape[0] > 1 and _jacobi_sweeps(a, v, tol, max_sweeps) < 0:
        raise ConvergenceError("Jacobi eigensolver did not converge", max_sweeps)
    return np.diag(a).copy(), v


def sym_eigen(m, max_sweeps=MAX_SWEEPS):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Eigenvalues come back in descending order (stable sort, so tied values
    keep the solver's order). Each eigenvector is flipped so that its
    largest-magnitude component is positive.
    """
    a = check_symmetric(m).copy()
    values, vectors = _jacobi(a, max_sweeps=max_sweeps)
    order = np.argsort(-values, kind="stable")
    values = values[order]
    vectors = vectors[:, order]
    lead = np.argmax(np.abs(vectors), axis=0)
    signs = np.where(vectors[lead, np.arange(vectors.shape[1])] < 0, -1.0, 1.0)
    return EigenDecomposition(values, vectors * signs)


def sym_sqrt(m):
    """Symmetric positive semidefinite square root.

    Eigenvalues in [-1e-10, 0) are treated as round-off and clipped to zero.
    """
    values, vectors = sym_eigen(m)
    if values.size and values[-1] < -PSD_ATOL:
        raise NotPSDError(f"matrix is not positive semidefinite (min eigenvalue {values[-1]:.3e})")
    root = (vectors * np.sqrt(np.clip(values, 0.0, None))) @ vectors.T
    return 0.5 * (root + root.T)


def cholesky(m):
    """Lower-triangular ``L`` with ``L @ L.T == m`` for a positive definite ``m``."""
    a = check_symmetric(m)
    n = a.shape[0]
    low = np.zeros_like(a)
    for j in range(n):
        pivot = a[j, j] - low[j, :j] @ low[j, :j]
        if pivot <= 0.0:
            raise NotPSDError(f"matrix is not positive definite (pivot {j} = {pivot:.3e})")
        low[j, j] = math.sqrt(pivot)
        low[j + 1:, j] = (a[j + 1:, j] - low[j + 1:, :j] @ low[j, :j]) / low[j, j]
    return low


def quantile_rank(n, q):
    """1-based rank ``ceil(q * n)`` of the inverse-ECDF quantile, floored at 1.

    ``q * n`` is rounded to 9 decimals first so that products such as
    ``0.15 * 20`` land on the integer they denote.
    """
    if n < 1:
        raise ValidationError("quantile of an empty sample is undefined")
    if not 0.0 <= q <= 1.0:
        raise ValidationError(f"quantile level must lie in [0, 1], got {q}")
    return min(max(math.ceil(round(q * n, 9)), 1), n)


def empirical_quantile(values, q):
    """Order statistic ``x_(ceil(q*n))`` of already sorted ``values``; ``x_(0)`` means ``x_(1)``."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValidationError("quantile of an empty sample is undefined")
    return float(values[quantile_rank(values.size, q) - 1])


# Acklam's rational approximation, refined below with Halley steps.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_SQRT2PI = math.sqrt(2.0 * math.pi)


def normal_cdf(x):
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def _lower_tail_quantile(q):
    # q in (0, 0.5]
    if q < 0.02425:
        r = math.sqrt(-2.0 * math.log(q))
        x = ((((((_C[0] * r + _C[1]) * r + _C[2]) * r + _C[3]) * r + _C[4]) * r + _C[5])
             / ((((_D[0] * r + _D[1]) * r + _D[2]) * r + _D[3]) * r + 1.0))
    else:
        u = q - 0.5
        r = u * u
        x = ((((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * u
             / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0))
    for _ in range(2):
        err = normal_cdf(x) - q
        u = err * _SQRT2PI * math.exp(0.5 * x * x)
        x -= u / (1.0 + 0.5 * x * u)
    return x


def normal_quantile(q):
    """Standard normal quantile. Antisymmetric by construction: upper-half
    levels are computed as the negated lower-tail quantile of ``1 - q``."""
    q = float(q)
    if not 0.0 < q < 1.0:
        raise ValidationError(f"normal quantile needs 0 < q < 1, got {q}")
    if q == 0.5:
        return 0.0
    if q < 0.5:
        return _lower_tail_quantile(q)
    return -_lower_tail_quantile(1.0 - q)


def regularized_gamma_p(a, x, rtol=1e-15, max_iter=10_000):
    """Regularized lower incomplete gamma P(a, x)."""
    if a <= 0.0:
        raise ValidationError("shape parameter must be positive")
    if x < 0.0:
        raise ValidationError("x must be nonnegative")
    if x == 0.0:
        return 0.0
    log_prefix = -x + a * math.log(x) - math.lgamma(a)
    if x < a + 1.0:
        term = total = 1.0 / a
        ap = a
        for _ in range(max_iter):
            ap += 1.0
            term *= x / ap
            total += term
            if abs(term) < abs(total) * rtol:
                return min(1.0, total * math.exp(log_prefix))
        raise ConvergenceError("incomplete gamma series did not converge", max_iter)
    # Lentz continued fraction for Q(a, x)
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, max_iter + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        d = tiny if abs(d) < tiny else d
        c = b + an / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < rtol:
            return max(0.0, 1.0 - math.exp(log_prefix) * h)
    raise ConvergenceError("incomplete gamma continued fraction did not converge", max_iter)


def chi2_cdf(x, df):
    if x <= 0.0:
        return 0.0
    return regularized_gamma_p(0.5 * df, 0.5 * x)


def chi2_quantile(q, df, xtol=1e-13):
    """Chi-square quantile by bisection on the regularized incomplete gamma."""
    if not 0.0 < q < 1.0:
        raise ValidationError(f"chi-square quantile needs 0 < q < 1, got {q}")
    if df <= 0:
        raise ValidationError("degrees of freedom must be positive")
    lo, hi = 0.0, max(1.0, float(df))
    while chi2_cdf(hi, df) < q:
        lo, hi = hi, 2.0 * hi
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if chi2_cdf(mid, df) < q:
            lo = mid
        else:
            hi = mid
        if hi - lo <= xtol * hi:
            break
    return 0.5 * (lo + hi)
