"""Special functions used by the transition probability formulas.

Everything touching I0 is kept in the log domain: the OOFSK threshold
constant xi carries a factor exp(alpha^2) and linear I0 overflows near 713.
"""

from __future__ import annotations

import math
from typing import Union

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaln, i0e, ive

from ..core.errors import DomainError, NumericalError

__all__ = [
    "bessel_i0_inverse",
    "bessel_i0_inverse_array",
    "log_bessel_i0",
    "log_bessel_i0_array",
    "log_bessel_i0_derivative",
    "log_binomial",
    "marcum_q1",
    "marcum_q1_lower_bound",
]

ArrayLike = Union[float, np.ndarray]

_SERIES_CUTOFF = 1.0
_SERIES_TERMS = 14
_MARCUM_ABS_TOL = 1e-12
_MARCUM_MAX_TERMS = 200_000
# exp(-800) underflows; beyond this gap Q1 is exactly 0 or 1 in double
_MARCUM_SATURATION = 800.0
_INVERSE_TOL = 1e-10
_NEWTON_STEPS = 4


def log_bessel_i0(x: float) -> float:
    """ln I0(x) for finite x >= 0."""
    value = _as_checked_scalar(x, "x")
    if value < _SERIES_CUTOFF:
        return math.log1p(_i0_series_minus_one(value))
    return math.log(float(i0e(value))) + value


def log_bessel_i0_array(x: np.ndarray) -> np.ndarray:
    values = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(values)) or np.any(values < 0):
        raise DomainError("log_bessel_i0 exige argumentos finitos e >= 0.")
    out = np.empty_like(values)
    small = values < _SERIES_CUTOFF
    if np.any(small):
        out[small] = np.log1p(_i0_series_minus_one(values[small]))
    large = ~small
    if np.any(large):
        out[large] = np.log(i0e(values[large])) + values[large]
    return out


def _i0_series_minus_one(x: ArrayLike) -> ArrayLike:
    # I0(x) - 1 = sum_{k>=1} (x^2/4)^k / (k!)^2, exact to double for x < 1
    quarter_sq = np.asarray(x, dtype=float) ** 2 / 4.0
    term = np.ones_like(quarter_sq)
    total = np.zeros_like(quarter_sq)
    for k in range(1, _SERIES_TERMS + 1):
        term = term * quarter_sq / (k * k)
        total = total + term
    if np.ndim(total) == 0:
        return float(total)
    return total


def log_bessel_i0_derivative(x: ArrayLike) -> ArrayLike:
    # d/dx ln I0(x) = I1(x) / I0(x)
    return ive(1, x) / ive(0, x)


def bessel_i0_inverse(log_xi: float) -> float:
    """Return x >= 0 with ln I0(x) = log_xi.

    Bracketing root search on the monotone ln I0 followed by a short Newton
    polish. Callers handle xi < 1 themselves (the threshold is then zero).
    """
    target = _as_finite(log_xi, "log_xi")
    if target < 0:
        raise DomainError(f"bessel_i0_inverse exige log_xi >= 0, recebido {target!r}.")
    if target == 0:
        return 0.0

    upper = _inverse_upper_bound(target)
    while log_bessel_i0(upper) < target:
        upper *= 2.0

    try:
        root = brentq(
            lambda x: log_bessel_i0(x) - target,
            0.0,
            upper,
            xtol=1e-300,
            rtol=4.0 * np.finfo(float).eps,
            maxiter=500,
        )
    except (ValueError, RuntimeError) as exc:
        raise NumericalError(
            "Inversa de ln I0 nao convergiu.",
            {"log_xi": target, "upper": upper, "cause": str(exc)},
        ) from exc
    for _ in range(_NEWTON_STEPS):
        residual = log_bessel_i0(root) - target
        if abs(residual) <= _INVERSE_TOL * 1e-3:
            break
        slope = float(log_bessel_i0_derivative(root))
        if slope <= 0:
            break
        candidate = root - residual / slope
        if candidate < 0 or not math.isfinite(candidate):
            break
        root = candidate
    return float(root)


def _inverse_upper_bound(target: float) -> float:
    # ln I0(x) >= ln(1 + x^2/4) gives a bound for small targets; the
    # asymptotic inversion x ~ L + ln(2 pi L)/2 covers large ones
    if target < 30.0:
        small_bound = 2.0 * math.sqrt(math.expm1(target))
    else:
        small_bound = math.inf
    asymptotic = target + 0.5 * math.log(2.0 * math.pi * max(target, 1.0)) + 1.0
    return max(min(small_bound, 2.0 * asymptotic), 1e-300)


def bessel_i0_inverse_array(log_xi: np.ndarray, max_iter: int = 200) -> np.ndarray:
    """Vectorized inverse of ln I0.

    ln I0 is increasing and convex on [0, inf), so Newton started above the
    root decreases monotonically onto it.
    """
    targets = np.asarray(log_xi, dtype=float)
    if not np.all(np.isfinite(targets)) or np.any(targets < 0):
        raise DomainError("bessel_i0_inverse exige log_xi finito e >= 0.")

    x = targets + 0.5 * np.log(2.0 * np.pi * np.maximum(targets, 1.0)) + 1.0
    small_bound = 2.0 * np.sqrt(np.expm1(np.minimum(targets, 30.0)))
    x = np.where(targets < 30.0, np.minimum(x, small_bound), x)
    x = np.maximum(x, 1e-300)
    below = log_bessel_i0_array(x) < targets
    while np.any(below):
        x = np.where(below, 2.0 * x, x)
        below = log_bessel_i0_array(x) < targets

    active = targets > 0
    for _ in range(max_iter):
        if not np.any(active):
            break
        residual = log_bessel_i0_array(x) - targets
        slope = log_bessel_i0_derivative(x)
        step = np.where(active & (slope > 0), residual / np.where(slope > 0, slope, 1.0), 0.0)
        x = np.maximum(x - step, 0.0)
        active = active & (np.abs(step) > 1e-15 * np.maximum(x, 1e-300))
    return np.where(targets == 0, 0.0, x)


def marcum_q1(a: float, b: float) -> float:
    """First order Marcum Q-function Q1(a, b).

    Uses Q1 = exp(-(a^2+b^2)/2) sum_k (a/b)^k I_k(ab) when b >= a and the
    complement 1 - Q1 = exp(-(a^2+b^2)/2) sum_{k>=1} (b/a)^k I_k(ab)
    otherwise, with the exponentials folded into scaled Bessel values.
    """
    a_val = _as_finite(a, "a")
    b_val = _as_finite(b, "b")
    if a_val < 0 or b_val < 0:
        raise DomainError("marcum_q1 exige a >= 0 e b >= 0.")
    if b_val == 0:
        return 1.0
    if a_val == 0:
        return math.exp(-0.5 * b_val * b_val)

    gap = 0.5 * (a_val - b_val) ** 2
    if gap > _MARCUM_SATURATION:
        return 1.0 if a_val > b_val else 0.0

    z = a_val * b_val
    envelope = math.exp(-gap)
    if b_val >= a_val:
        ratio = a_val / b_val
        partial = _marcum_series(ratio, z, first=0)
        return _clip_unit(envelope * partial)
    ratio = b_val / a_val
    partial = _marcum_series(ratio, z, first=1)
    return _clip_unit(1.0 - envelope * partial)


def _marcum_series(ratio: float, z: float, first: int) -> float:
    terms = _marcum_term_count(ratio, z)
    orders = np.arange(first, first + terms, dtype=float)
    # ive(k, z) = I_k(z) exp(-z); envelope exp(-(a-b)^2/2) restores the rest
    with np.errstate(under="ignore"):
        powers = np.exp(orders * math.log(ratio)) if ratio < 1.0 else np.ones_like(orders)
        values = powers * ive(orders, z)
    return math.fsum(values.tolist())


def _marcum_term_count(ratio: float, z: float) -> int:
    # I_k(z) e^{-z} <= exp(-k^2 / (2(z + k))) roughly, and ratio^k is
    # geometric; take whichever gets below the tolerance first
    target = -math.log(_MARCUM_ABS_TOL * 1e-4)
    bessel_bound = math.sqrt(2.0 * target * (z + 1.0)) + target
    if ratio < 1.0:
        geometric_bound = target / -math.log(ratio)
        count = min(bessel_bound, geometric_bound)
    else:
        count = bessel_bound
    return int(min(max(count + 16, 32), _MARCUM_MAX_TERMS))


def marcum_q1_lower_bound(a: float, zeta: float) -> float:
    """Lower bound Q1(a, a zeta) >= 1 - zeta/(1-zeta) exp(-a^2 (1-zeta)^2 / 2)."""
    a_val = _as_finite(a, "a")
    zeta_val = _as_finite(zeta, "zeta")
    if a_val < 0 or not 0 <= zeta_val < 1:
        raise DomainError("marcum_q1_lower_bound exige a >= 0 e 0 <= zeta < 1.")
    return 1.0 - zeta_val / (1.0 - zeta_val) * math.exp(
        -0.5 * a_val * a_val * (1.0 - zeta_val) ** 2
    )


def log_binomial(n: int, k: int) -> float:
    if int(n) != n or int(k) != k:
        raise DomainError("log_binomial exige inteiros.")
    n, k = int(n), int(k)
    if n < 0 or k < 0 or k > n:
        raise DomainError(f"log_binomial exige 0 <= k <= n, recebido n={n}, k={k}.")
    if k == 0 or k == n:
        return 0.0
    return float(gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1))


def _as_finite(value: float, name: str) -> float:
    result = float(value)
    if not math.isfinite(result):
        raise DomainError(f"{name} deve ser finito, recebido {value!r}.")
    return result


def _as_checked_scalar(value: float, name: str) -> float:
    result = _as_finite(value, name)
    if result < 0:
        raise DomainError(f"{name} deve ser >= 0, recebido {value!r}.")
    return result


def _clip_unit(value: float) -> float:
    return min(1.0, max(0.0, value))
