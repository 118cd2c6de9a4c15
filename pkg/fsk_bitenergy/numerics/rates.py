from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.special import entr, rel_entr

from ..core.config import NumericsConfig
from ..core.errors import ContractError, DomainError
from .channel import (
    ChannelKind,
    ChannelModel,
    Family,
    FskTransition,
    ModulationSpec,
    OofskTransition,
    coherent_realization_transition,
    fsk_p11_awgn_array,
    transition_for,
)
from .quadrature import integrate_noncentral

__all__ = [
    "RatePoint",
    "WIDEBAND_LIMIT_DB",
    "bit_energy_db",
    "expect_over_rician",
    "fsk_capacity",
    "generic_dmc_mi",
    "oofsk_rate",
    "rate_curve",
    "rate_nats",
    "rate_point",
    "spectral_efficiency",
]

LOG2_E = 1.0 / math.log(2.0)
WIDEBAND_LIMIT_DB = 10.0 * math.log10(math.log(2.0))

_ROW_TOLERANCE = 1e-10
_INPUT_TOLERANCE = 1e-12


@dataclass(frozen=True)
class RatePoint:
    snr: float
    rate_nats: float
    spectral_eff: float
    ebn0_db: float


def fsk_capacity(trans: FskTransition) -> float:
    """Capacity in nats of the M-ary symmetric channel with diagonal p11."""
    m = trans.m
    p = trans.p11
    if p >= 1.0:
        return math.log(m)
    # ln M + p ln p + (1-p) ln((1-p)/(M-1)), written around p = 1/M
    delta = p - 1.0 / m
    value = p * math.log1p(m * delta) + (1.0 - p) * math.log1p(-m * delta / (m - 1))
    return min(max(value, 0.0), math.log(m))


def oofsk_rate(trans: OofskTransition, spec: ModulationSpec) -> float:
    if spec.family is not Family.OOFSK:
        raise ContractError("oofsk_rate exige modulacao OOFSK.")
    if trans.m != spec.m:
        raise ContractError("Transicao e modulacao com M diferentes.")
    m = spec.m
    nu = spec.duty
    off_output = (1.0 - nu) * trans.p00 + nu * trans.p0l
    tone_output = (1.0 - nu) * trans.pl0 + (nu / m) * trans.pll + ((m - 1) * nu / m) * trans.plm

    off_branch = float(rel_entr(trans.p00, off_output) + m * rel_entr(trans.pl0, tone_output))
    tone_branch = float(
        rel_entr(trans.p0l, off_output)
        + rel_entr(trans.pll, tone_output)
        + (m - 1) * rel_entr(trans.plm, tone_output)
    )
    value = (1.0 - nu) * off_branch + nu * tone_branch
    return max(value, 0.0)


def generic_dmc_mi(matrix: np.ndarray, input_dist: np.ndarray) -> float:
    """I(X;Y) = H(Y) - H(Y|X) of a discrete channel, rows indexed by input."""
    channel = np.asarray(matrix, dtype=float)
    dist = np.asarray(input_dist, dtype=float).ravel()
    if channel.ndim != 2 or channel.shape[0] != dist.size:
        raise ContractError(
            f"Dimensoes incompativeis: matriz {channel.shape}, entrada {dist.size}."
        )
    if np.any(channel < 0) or np.any(dist < 0):
        raise ContractError("Probabilidades negativas na matriz ou na entrada.")
    row_sums = channel.sum(axis=1)
    if np.max(np.abs(row_sums - 1.0)) > _ROW_TOLERANCE:
        raise ContractError(
            f"Linhas da matriz nao somam 1 (desvio maximo {np.max(np.abs(row_sums - 1.0)):.3e})."
        )
    if abs(dist.sum() - 1.0) > _INPUT_TOLERANCE:
        raise ContractError(f"Distribuicao de entrada soma {dist.sum()!r}, esperado 1.")

    output = dist @ channel
    output_entropy = float(entr(output).sum())
    conditional_entropy = float(dist @ entr(channel).sum(axis=1))
    return max(output_entropy - conditional_entropy, 0.0)


def expect_over_rician(
    f: Callable[[float], float],
    channel: ChannelModel,
    tol: float = 1e-8,
    numerics: Optional[NumericsConfig] = None,
    *,
    vectorized: bool = False,
) -> float:
    """E[f(|h|^2)] for h ~ CN(d, gamma^2).

    With vectorized=True, f receives the whole array of |h|^2 nodes of one
    quadrature pass and returns an array of the same shape.
    """
    if channel.kind is not ChannelKind.COHERENT_RICIAN:
        raise ContractError("expect_over_rician exige canal coherent-rician.")
    if channel.gamma_sq == 0:
        if vectorized:
            return float(np.asarray(f(np.array([channel.d_sq])), dtype=float)[0])
        return float(f(channel.d_sq))
    settings = numerics if numerics is not None else NumericsConfig()

    def integrand(values: np.ndarray) -> np.ndarray:
        if vectorized:
            return np.asarray(f(values), dtype=float)
        return np.array([f(float(x)) for x in values], dtype=float)

    return integrate_noncentral(
        integrand,
        channel.gamma_sq,
        channel.d_sq,
        epsrel=tol,
        epsabs=settings.quadrature_epsabs,
        limit=settings.quadrature_limit,
    ).value


def _fsk_capacity_array(p11: np.ndarray, m: int) -> np.ndarray:
    flat = [fsk_capacity(FskTransition(p11=float(p), m=m)) for p in p11.ravel()]
    return np.array(flat, dtype=float).reshape(p11.shape)


def _rate_of(trans: FskTransition | OofskTransition, spec: ModulationSpec) -> float:
    if isinstance(trans, FskTransition):
        return fsk_capacity(trans)
    return oofsk_rate(trans, spec)


def rate_nats(
    spec: ModulationSpec,
    channel: ChannelModel,
    snr: float,
    numerics: Optional[NumericsConfig] = None,
) -> float:
    settings = numerics if numerics is not None else NumericsConfig()
    if channel.kind is ChannelKind.COHERENT_RICIAN and spec.family is Family.FSK:
        return expect_over_rician(
            lambda h_sq: _fsk_capacity_array(
                fsk_p11_awgn_array(spec.m, snr * h_sq, settings), spec.m
            ),
            channel,
            tol=settings.expectation_tol,
            numerics=settings,
            vectorized=True,
        )
    if channel.kind is ChannelKind.COHERENT_RICIAN:
        return expect_over_rician(
            lambda h_sq: _rate_of(coherent_realization_transition(spec, snr, h_sq, settings), spec),
            channel,
            tol=settings.expectation_tol,
            numerics=settings,
        )
    return _rate_of(transition_for(spec, channel, snr, settings), spec)


def spectral_efficiency(rate: float, m: int) -> float:
    # M tones of duration T occupy M/T hertz
    return rate * LOG2_E / m


_TINY_RATE = float(np.finfo(float).tiny)


def bit_energy_db(snr: float, rate: float) -> float:
    # subnormal rates overflow snr * ln2 / rate
    if rate <= _TINY_RATE:
        return math.inf
    return 10.0 * math.log10(snr * math.log(2.0) / rate)


def rate_point(
    spec: ModulationSpec,
    channel: ChannelModel,
    snr: float,
    numerics: Optional[NumericsConfig] = None,
) -> RatePoint:
    value = float(snr)
    if not math.isfinite(value) or value <= 0:
        raise DomainError(f"rate_point exige snr > 0, recebido {snr!r}.")
    rate = rate_nats(spec, channel, value, numerics)
    return RatePoint(
        snr=value,
        rate_nats=rate,
        spectral_eff=spectral_efficiency(rate, spec.m),
        ebn0_db=bit_energy_db(value, rate),
    )


def rate_curve(
    spec: ModulationSpec,
    channel: ChannelModel,
    snr_values: Sequence[float],
    workers: int = 1,
    numerics: Optional[NumericsConfig] = None,
) -> List[RatePoint]:
    ordered = sorted(float(s) for s in snr_values)
    if workers <= 1 or len(ordered) < 2:
        return [rate_point(spec, channel, s, numerics) for s in ordered]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda s: rate_point(spec, channel, s, numerics), ordered))
