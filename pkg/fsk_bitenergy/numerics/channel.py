"""Hard-decision transition probabilities for FSK and on-off FSK.

Conventions used throughout:

- ``snr`` is the linear ratio E/N0 with unit noise power per tone.
- Fading is ``h ~ CN(d, gamma^2)`` with ``|d|^2 + gamma^2 = 1`` and Rician
  factor ``K = |d|^2 / gamma^2``.
- Transition matrices are indexed ``[input, output]``; for OOFSK index 0 is
  the "off" symbol and 1..M are the tones.

The received energy on the signalling tone is noncentral with variance
scale ``vb`` and mean energy ``sb``; every noise-only tone is Exp(1). All
closed forms below are the expectation of ``(1 - e^{-V})^{M-1}`` (optionally
above the threshold ``tau``), expanded binomially for the sum form and
integrated directly for the quadrature form.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, Optional

import numpy as np
from mpmath.ctx_mp import MPContext
from scipy.optimize import brentq

from ..core.config import NumericsConfig
from ..core.errors import ContractError, DomainError, NumericalError
from .quadrature import integrate_noncentral, integrate_noncentral_batch
from .specfun import bessel_i0_inverse, log_bessel_i0, log_bessel_i0_derivative, marcum_q1

__all__ = [
    "ChannelKind",
    "ChannelModel",
    "Family",
    "FskTransition",
    "ModulationSpec",
    "OofskTransition",
    "coherent_realization_transition",
    "expected_transition_entries",
    "fsk_p11_awgn",
    "fsk_p11_awgn_array",
    "fsk_p11_noncoherent_rician",
    "fsk_p11_quadrature",
    "fsk_p11_sum",
    "oofsk_pll_quadrature",
    "oofsk_pll_sum",
    "oofsk_threshold",
    "oofsk_threshold_awgn",
    "oofsk_threshold_noncoherent",
    "oofsk_transitions_awgn",
    "oofsk_transitions_noncoherent",
    "transition_for",
]


class Family(str, Enum):
    FSK = "fsk"
    OOFSK = "oofsk"


class ChannelKind(str, Enum):
    AWGN = "awgn"
    COHERENT_RICIAN = "coherent-rician"
    NONCOHERENT_RICIAN = "noncoherent-rician"


@dataclass(frozen=True)
class ModulationSpec:
    family: Family
    m: int
    duty: float = 1.0

    def __post_init__(self) -> None:
        if isinstance(self.m, bool) or int(self.m) != self.m or self.m < 2:
            raise DomainError(f"M deve ser inteiro >= 2, recebido {self.m!r}.")
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "family", Family(self.family))
        duty = float(self.duty)
        if not (0.0 < duty <= 1.0):
            raise DomainError(f"duty deve estar em (0, 1], recebido {self.duty!r}.")
        if self.family is Family.FSK and duty != 1.0:
            raise DomainError("FSK exige duty = 1.")
        object.__setattr__(self, "duty", duty)

    @classmethod
    def fsk(cls, m: int) -> "ModulationSpec":
        return cls(family=Family.FSK, m=m, duty=1.0)

    @classmethod
    def oofsk(cls, m: int, duty: float) -> "ModulationSpec":
        return cls(family=Family.OOFSK, m=m, duty=duty)

    @property
    def alphabet_size(self) -> int:
        return self.m + 1 if self.family is Family.OOFSK else self.m

    def input_distribution(self) -> np.ndarray:
        if self.family is Family.FSK:
            return np.full(self.m, 1.0 / self.m)
        dist = np.full(self.m + 1, self.duty / self.m)
        dist[0] = 1.0 - self.duty
        return dist


@dataclass(frozen=True)
class ChannelModel:
    kind: ChannelKind
    rician_k: Optional[float] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ChannelKind(self.kind))
        if self.kind is ChannelKind.AWGN:
            if self.rician_k is not None:
                raise DomainError("Canal AWGN nao aceita fator de Rice.")
            return
        if self.rician_k is None:
            raise DomainError(f"Canal {self.kind.value} exige fator de Rice K.")
        k = float(self.rician_k)
        if math.isnan(k) or k < 0:
            raise DomainError(f"Fator de Rice deve ser >= 0, recebido {self.rician_k!r}.")
        object.__setattr__(self, "rician_k", k)

    @classmethod
    def awgn(cls) -> "ChannelModel":
        return cls(kind=ChannelKind.AWGN)

    @classmethod
    def coherent_rician(cls, k: float) -> "ChannelModel":
        return cls(kind=ChannelKind.COHERENT_RICIAN, rician_k=k)

    @classmethod
    def noncoherent_rician(cls, k: float) -> "ChannelModel":
        return cls(kind=ChannelKind.NONCOHERENT_RICIAN, rician_k=k)

    @property
    def is_fading(self) -> bool:
        return self.kind is not ChannelKind.AWGN

    @property
    def d_sq(self) -> float:
        if self.rician_k is None or math.isinf(self.rician_k):
            return 1.0
        return self.rician_k / (self.rician_k + 1.0)

    @property
    def gamma_sq(self) -> float:
        if self.rician_k is None or math.isinf(self.rician_k):
            return 0.0
        return 1.0 / (self.rician_k + 1.0)

    def label(self) -> str:
        return self.kind.value


@dataclass(frozen=True)
class FskTransition:
    p11: float
    m: int

    @property
    def plm(self) -> float:
        return (1.0 - self.p11) / (self.m - 1)

    def entries(self) -> Dict[str, float]:
        return {"p11": self.p11, "plm": self.plm}

    def matrix(self) -> np.ndarray:
        out = np.full((self.m, self.m), self.plm)
        np.fill_diagonal(out, self.p11)
        return out


@dataclass(frozen=True)
class OofskTransition:
    p00: float
    pl0: float
    pll: float
    p0l: float
    plm: float
    tau: float
    alpha_sq: float
    m: int

    def entries(self) -> Dict[str, float]:
        return {
            "p00": self.p00,
            "pl0": self.pl0,
            "pll": self.pll,
            "p0l": self.p0l,
            "plm": self.plm,
        }

    def matrix(self) -> np.ndarray:
        size = self.m + 1
        out = np.full((size, size), self.plm)
        out[0, 0] = self.p00
        out[0, 1:] = self.pl0
        out[1:, 0] = self.p0l
        idx = np.arange(1, size)
        out[idx, idx] = self.pll
        return out


_MP_LOCAL = threading.local()


def _mp_context(digits: int) -> MPContext:
    # mpmath's global context is shared; sweeps run on worker threads
    ctx = getattr(_MP_LOCAL, "ctx", None)
    if ctx is None:
        ctx = MPContext()
        _MP_LOCAL.ctx = ctx
    ctx.dps = digits
    return ctx


def _numerics(numerics: Optional[NumericsConfig]) -> NumericsConfig:
    return numerics if numerics is not None else NumericsConfig()


def _check_probability(value: float, name: str, tolerance: float) -> float:
    if not math.isfinite(value) or value < -tolerance or value > 1.0 + tolerance:
        raise NumericalError(
            "Probabilidade fora de [0, 1].", {"entry": name, "value": value, "tolerance": tolerance}
        )
    return min(1.0, max(0.0, value))


def _check_m(m: int) -> int:
    if isinstance(m, bool) or int(m) != m or m < 2:
        raise DomainError(f"M deve ser inteiro >= 2, recebido {m!r}.")
    return int(m)


def _check_snr(snr: float, *, positive: bool = False) -> float:
    value = float(snr)
    if not math.isfinite(value) or value < 0 or (positive and value == 0):
        bound = "> 0" if positive else ">= 0"
        raise DomainError(f"snr deve ser finito e {bound}, recebido {snr!r}.")
    return value


def _require_oofsk(spec: ModulationSpec) -> None:
    if spec.family is not Family.OOFSK:
        raise ContractError("Operacao exige modulacao OOFSK.")


def _require_kind(channel: ChannelModel, kind: ChannelKind) -> None:
    if channel.kind is not kind:
        raise ContractError(f"Operacao exige canal {kind.value}, recebido {channel.kind.value}.")


# ---------------------------------------------------------------------------
# FSK correct-detection probability


def fsk_p11_sum(
    m: int, variance_scale: float, mean_energy: float, digits: int = 40
) -> float:
    """Alternating binomial sum for P(y = x | x), in extended precision."""
    m = _check_m(m)
    ctx = _mp_context(digits)
    vb = ctx.mpf(variance_scale)
    sb = ctx.mpf(mean_energy)
    total = ctx.mpf(0)
    for n in range(m):
        denom = 1 + n * vb
        term = ctx.mpf(math.comb(m - 1, n)) / denom * ctx.exp(-n * sb / denom)
        total = total + term if n % 2 == 0 else total - term
    return float(total)


def fsk_p11_quadrature(
    m: int,
    snr: float,
    variance_scale: float,
    mean_sq: float,
    numerics: Optional[NumericsConfig] = None,
) -> float:
    m = _check_m(m)
    snr = _check_snr(snr)
    settings = _numerics(numerics)
    result = integrate_noncentral(
        lambda v: np.power(-np.expm1(-v), m - 1),
        variance_scale,
        mean_sq * snr,
        epsrel=settings.quadrature_epsrel,
        epsabs=settings.quadrature_epsabs,
        limit=settings.quadrature_limit,
    )
    return result.value


def _fsk_p11(m: int, variance_scale: float, mean_energy: float, settings: NumericsConfig) -> float:
    tolerance = settings.probability_tolerance
    if m <= settings.sum_form_max_m:
        value = fsk_p11_sum(m, variance_scale, mean_energy, settings.sum_precision_digits)
    else:
        value = fsk_p11_quadrature(m, 1.0, variance_scale, mean_energy, settings)
        tolerance = max(tolerance, settings.quadrature_epsrel)
    return _check_probability(value, "p11", tolerance)


def fsk_p11_awgn(m: int, snr: float, numerics: Optional[NumericsConfig] = None) -> FskTransition:
    m = _check_m(m)
    snr = _check_snr(snr)
    p11 = _fsk_p11(m, 1.0, snr, _numerics(numerics))
    return FskTransition(p11=max(p11, 1.0 / m), m=m)


def fsk_p11_awgn_array(
    m: int, snr: np.ndarray, numerics: Optional[NumericsConfig] = None
) -> np.ndarray:
    """AWGN p11 for an array of SNRs; large alphabets share one batched quadrature."""
    m = _check_m(m)
    values = np.asarray(snr, dtype=float)
    if not np.all(np.isfinite(values)) or np.any(values < 0):
        raise DomainError("snr deve ser finito e >= 0 em todos os pontos.")
    settings = _numerics(numerics)
    flat = values.ravel()
    tolerance = settings.probability_tolerance
    if m <= settings.sum_form_max_m:
        raw = [fsk_p11_sum(m, 1.0, float(s), settings.sum_precision_digits) for s in flat]
    else:
        raw = integrate_noncentral_batch(
            lambda v: np.power(-np.expm1(-v), m - 1),
            1.0,
            flat,
            epsrel=settings.quadrature_epsrel,
            epsabs=settings.quadrature_epsabs,
            limit=settings.quadrature_limit,
        ).values.tolist()
        tolerance = max(tolerance, settings.quadrature_epsrel)
    p11 = np.array([_check_probability(float(p), "p11", tolerance) for p in raw], dtype=float)
    return np.maximum(p11, 1.0 / m).reshape(values.shape)


def fsk_p11_noncoherent_rician(
    m: int, snr: float, channel: ChannelModel, numerics: Optional[NumericsConfig] = None
) -> FskTransition:
    _require_kind(channel, ChannelKind.NONCOHERENT_RICIAN)
    m = _check_m(m)
    snr = _check_snr(snr)
    p11 = _fsk_p11(m, 1.0 + channel.gamma_sq * snr, channel.d_sq * snr, _numerics(numerics))
    return FskTransition(p11=max(p11, 1.0 / m), m=m)


# ---------------------------------------------------------------------------
# OOFSK threshold


def _log_prior_ratio(m: int, duty: float) -> float:
    # ln(M (1 - nu) / nu); -inf at full duty
    if duty >= 1.0:
        return -math.inf
    return math.log(m) + math.log1p(-duty) - math.log(duty)


def _rician_threshold(
    m: int, duty: float, alpha_sq: float, d_sq: float, gamma_sq: float
) -> float:
    """Solve c x + ln I0(b sqrt(x)) = ln xi for the MAP threshold."""
    log_prior = _log_prior_ratio(m, duty)
    if math.isinf(log_prior):
        return 0.0
    spread = alpha_sq * gamma_sq
    c = spread / (1.0 + spread)
    b = 2.0 * math.sqrt(alpha_sq * d_sq) / (1.0 + spread)
    log_xi = log_prior + math.log1p(spread) + alpha_sq * d_sq / (1.0 + spread)
    if log_xi <= 0:
        return 0.0
    if b == 0:
        return log_xi / c
    bessel_root = (bessel_i0_inverse(log_xi) / b) ** 2
    if c == 0:
        return bessel_root
    upper = min(log_xi / c, bessel_root)

    def log_phi_gap(x: float) -> float:
        return c * x + log_bessel_i0(b * math.sqrt(x)) - log_xi

    if log_phi_gap(upper) <= 0:
        return upper
    try:
        root = brentq(
            log_phi_gap, 0.0, upper, xtol=1e-300, rtol=4.0 * np.finfo(float).eps, maxiter=500
        )
    except (ValueError, RuntimeError) as exc:
        raise NumericalError(
            "Limiar MAP nao convergiu.",
            {
                "m": m,
                "duty": duty,
                "alpha_sq": alpha_sq,
                "d_sq": d_sq,
                "gamma_sq": gamma_sq,
                "cause": str(exc),
            },
        ) from exc
    for _ in range(4):
        if root <= 0:
            break
        residual = log_phi_gap(root)
        if abs(residual) <= 1e-13:
            break
        arg = b * math.sqrt(root)
        slope = c + float(log_bessel_i0_derivative(arg)) * b / (2.0 * math.sqrt(root))
        candidate = root - residual / slope
        if not (0 < candidate <= upper):
            break
        root = candidate
    return float(root)


def oofsk_threshold_awgn(spec: ModulationSpec, snr: float) -> float:
    _require_oofsk(spec)
    snr = _check_snr(snr, positive=True)
    alpha_sq = snr / spec.duty
    log_prior = _log_prior_ratio(spec.m, spec.duty)
    if math.isinf(log_prior):
        return 0.0
    log_xi = log_prior + alpha_sq
    if log_xi <= 0:
        return 0.0
    root = bessel_i0_inverse(log_xi)
    return root * root / (4.0 * alpha_sq)


def oofsk_threshold_noncoherent(spec: ModulationSpec, snr: float, channel: ChannelModel) -> float:
    _require_oofsk(spec)
    _require_kind(channel, ChannelKind.NONCOHERENT_RICIAN)
    snr = _check_snr(snr, positive=True)
    return _rician_threshold(spec.m, spec.duty, snr / spec.duty, channel.d_sq, channel.gamma_sq)


def _coherent_threshold(spec: ModulationSpec, snr: float, h_sq: float) -> float:
    alpha_sq = snr * h_sq / spec.duty
    if alpha_sq > 0:
        return oofsk_threshold_awgn(spec, snr * h_sq)
    log_prior = _log_prior_ratio(spec.m, spec.duty)
    if log_prior > 0:
        return math.inf
    if log_prior < 0:
        return 0.0
    # xi = 1 at zero gain: tau -> [I0^{-1}(alpha^2)]^2 / (4 alpha^2) -> 1
    return 1.0


def oofsk_threshold(
    spec: ModulationSpec, snr: float, channel: ChannelModel, h_sq: float = 1.0
) -> float:
    """Threshold for any channel kind; coherent channels use the realization h_sq."""
    if channel.kind is ChannelKind.AWGN:
        return oofsk_threshold_awgn(spec, snr)
    if channel.kind is ChannelKind.NONCOHERENT_RICIAN:
        return oofsk_threshold_noncoherent(spec, snr, channel)
    _require_oofsk(spec)
    _check_snr(snr, positive=True)
    return _coherent_threshold(spec, snr, _check_snr(h_sq))


# ---------------------------------------------------------------------------
# OOFSK transitions


def oofsk_pll_sum(m: int, tau: float, variance_scale: float, mean_energy: float) -> float:
    """P(y = l | x = l) as the Marcum-weighted alternating sum."""
    m = _check_m(m)
    terms = []
    for n in range(m):
        scale = 1.0 + n * variance_scale
        weight = math.comb(m - 1, n) / scale * math.exp(-n * mean_energy / scale)
        q = marcum_q1(
            math.sqrt(2.0 * mean_energy / (variance_scale * scale)),
            math.sqrt(2.0 * tau * scale / variance_scale),
        )
        terms.append(weight * q if n % 2 == 0 else -weight * q)
    return math.fsum(terms)


def oofsk_pll_quadrature(
    m: int,
    tau: float,
    variance_scale: float,
    mean_energy: float,
    numerics: Optional[NumericsConfig] = None,
) -> float:
    m = _check_m(m)
    settings = _numerics(numerics)
    result = integrate_noncentral(
        lambda v: np.power(-np.expm1(-v), m - 1),
        variance_scale,
        mean_energy,
        lower=tau,
        epsrel=settings.quadrature_epsrel,
        epsabs=settings.quadrature_epsabs,
        limit=settings.quadrature_limit,
    )
    return result.value


def _oofsk_transition(
    m: int,
    tau: float,
    alpha_sq: float,
    variance_scale: float,
    mean_energy: float,
    settings: NumericsConfig,
) -> OofskTransition:
    tol = settings.probability_tolerance
    if math.isinf(tau):
        return OofskTransition(
            p00=1.0, pl0=0.0, pll=0.0, p0l=1.0, plm=0.0, tau=tau, alpha_sq=alpha_sq, m=m
        )
    if tau == 0:
        p00 = 0.0
        p0l = 0.0
        pll = _fsk_p11(m, variance_scale, mean_energy, settings)
    else:
        log_below = math.log1p(-math.exp(-tau))
        p00 = math.exp(m * log_below)
        pass_prob = marcum_q1(
            math.sqrt(2.0 * mean_energy / variance_scale), math.sqrt(2.0 * tau / variance_scale)
        )
        p0l = math.exp((m - 1) * log_below) * (1.0 - pass_prob)
        if m <= min(settings.marcum_sum_max_m, settings.sum_form_max_m):
            pll = oofsk_pll_sum(m, tau, variance_scale, mean_energy)
        else:
            pll = oofsk_pll_quadrature(m, tau, variance_scale, mean_energy, settings)
            tol = max(tol, settings.quadrature_epsrel)
        pll = _check_probability(pll, "pll", tol)
    # 1 - (1 - e^{-tau})^M without cancellation
    pl0 = -math.expm1(m * math.log1p(-math.exp(-tau))) / m if tau > 0 else 1.0 / m
    plm = (1.0 - pll - p0l) / (m - 1)
    return OofskTransition(
        p00=_check_probability(p00, "p00", tol),
        pl0=_check_probability(pl0, "pl0", tol),
        pll=pll,
        p0l=_check_probability(p0l, "p0l", tol),
        plm=_check_probability(plm, "plm", tol),
        tau=tau,
        alpha_sq=alpha_sq,
        m=m,
    )


def oofsk_transitions_awgn(
    spec: ModulationSpec, snr: float, numerics: Optional[NumericsConfig] = None
) -> OofskTransition:
    tau = oofsk_threshold_awgn(spec, snr)
    alpha_sq = snr / spec.duty
    return _oofsk_transition(spec.m, tau, alpha_sq, 1.0, alpha_sq, _numerics(numerics))


def oofsk_transitions_noncoherent(
    spec: ModulationSpec,
    snr: float,
    channel: ChannelModel,
    numerics: Optional[NumericsConfig] = None,
) -> OofskTransition:
    tau = oofsk_threshold_noncoherent(spec, snr, channel)
    alpha_sq = snr / spec.duty
    return _oofsk_transition(
        spec.m,
        tau,
        alpha_sq,
        1.0 + channel.gamma_sq * alpha_sq,
        channel.d_sq * alpha_sq,
        _numerics(numerics),
    )


def coherent_realization_transition(
    spec: ModulationSpec,
    snr: float,
    h_sq: float,
    numerics: Optional[NumericsConfig] = None,
) -> FskTransition | OofskTransition:
    """AWGN-form transition at the effective gain snr * |h|^2, threshold included."""
    snr = _check_snr(snr)
    h_sq = _check_snr(h_sq)
    settings = _numerics(numerics)
    if spec.family is Family.FSK:
        return fsk_p11_awgn(spec.m, snr * h_sq, settings)
    effective = snr * h_sq
    alpha_sq = effective / spec.duty
    tau = oofsk_threshold_awgn(spec, effective) if effective > 0 else _coherent_threshold(spec, snr, 0.0)
    return _oofsk_transition(spec.m, tau, alpha_sq, 1.0, alpha_sq, settings)


def transition_for(
    spec: ModulationSpec,
    channel: ChannelModel,
    snr: float,
    numerics: Optional[NumericsConfig] = None,
) -> FskTransition | OofskTransition:
    """Transition of a channel without receiver-side fading knowledge."""
    if channel.kind is ChannelKind.COHERENT_RICIAN:
        raise ContractError(
            "Canal coerente depende da realizacao; use coherent_realization_transition."
        )
    if spec.family is Family.FSK:
        if channel.kind is ChannelKind.AWGN:
            return fsk_p11_awgn(spec.m, snr, numerics)
        return fsk_p11_noncoherent_rician(spec.m, snr, channel, numerics)
    if channel.kind is ChannelKind.AWGN:
        return oofsk_transitions_awgn(spec, snr, numerics)
    return oofsk_transitions_noncoherent(spec, snr, channel, numerics)


def expected_transition_entries(
    spec: ModulationSpec,
    channel: ChannelModel,
    snr: float,
    numerics: Optional[NumericsConfig] = None,
) -> Dict[str, float]:
    """Transition entries, averaged over |h|^2 when the receiver knows h."""
    settings = _numerics(numerics)
    if channel.kind is not ChannelKind.COHERENT_RICIAN:
        return transition_for(spec, channel, snr, settings).entries()
    if channel.gamma_sq == 0:
        return coherent_realization_transition(spec, snr, channel.d_sq, settings).entries()
    if spec.family is Family.FSK:
        snr = _check_snr(snr)
        p11 = integrate_noncentral(
            lambda h_sq: fsk_p11_awgn_array(spec.m, snr * h_sq, settings),
            channel.gamma_sq,
            channel.d_sq,
            epsrel=settings.expectation_tol,
            epsabs=settings.quadrature_epsabs,
            limit=settings.quadrature_limit,
        ).value
        # plm is affine in p11
        return FskTransition(p11=p11, m=spec.m).entries()

    cache: Dict[float, Dict[str, float]] = {}

    def realization(h_sq: float) -> Dict[str, float]:
        if h_sq not in cache:
            cache[h_sq] = coherent_realization_transition(spec, snr, h_sq, settings).entries()
        return cache[h_sq]

    def entry_integrand(name: str) -> Callable[[np.ndarray], np.ndarray]:
        def integrand(values: np.ndarray) -> np.ndarray:
            return np.array([realization(float(x))[name] for x in values])

        return integrand

    names = list(realization(1.0).keys())
    averaged: Dict[str, float] = {}
    for name in names:
        averaged[name] = integrate_noncentral(
            entry_integrand(name),
            channel.gamma_sq,
            channel.d_sq,
            epsrel=settings.expectation_tol,
            epsabs=settings.quadrature_epsabs,
            limit=settings.quadrature_limit,
        ).value
    return averaged
