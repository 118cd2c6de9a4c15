"""Minimum bit energy search and the asymptotic SNR/duty schedules."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core.config import NumericsConfig, OptimizerConfig
from ..core.errors import DomainError
from .channel import ChannelKind, ChannelModel, Family, ModulationSpec, oofsk_threshold_awgn
from .rates import bit_energy_db, rate_nats, spectral_efficiency

__all__ = [
    "MinBitEnergyResult",
    "SchedulePoint",
    "duty_cycle_schedule",
    "golden_section",
    "locate_min_bit_energy",
    "logm_snr_ratio",
    "min_bit_energy",
    "schedule_duty",
    "schedule_tau_ratio_limit",
    "sweep_duty",
    "sweep_m",
    "sweep_rician_k",
]

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
INV_PHI_SQUARE = (3.0 - math.sqrt(5.0)) / 2.0


@dataclass(frozen=True)
class MinBitEnergyResult:
    ebn0_min_db: float
    se_star: float
    snr_star: float
    converged: bool
    diagnostics: Dict[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class SchedulePoint:
    snr: float
    nu: float
    alpha_sq: float
    tau: float
    rate_nats: float
    rate_ratio: float


def golden_section(
    f: Callable[[float], float], a: float, b: float, tol: float
) -> Tuple[float, float]:
    """Shrink [a, b] around a minimum of f until b - a <= tol.

    Returns the abscissa and value of the best interior point.
    """
    a, b = min(a, b), max(a, b)
    h = b - a
    if h <= tol:
        mid = 0.5 * (a + b)
        return mid, f(mid)

    steps = int(math.ceil(math.log(tol / h) / math.log(INV_PHI)))
    c = a + INV_PHI_SQUARE * h
    d = a + INV_PHI * h
    yc = f(c)
    yd = f(d)
    for _ in range(steps - 1):
        if yc < yd:
            b = d
            d, yd = c, yc
            h *= INV_PHI
            c = a + INV_PHI_SQUARE * h
            yc = f(c)
        else:
            a = c
            c, yc = d, yd
            h *= INV_PHI
            d = a + INV_PHI * h
            yd = f(d)
    return (c, yc) if yc < yd else (d, yd)


def _db(value: float) -> float:
    return 10.0 * math.log10(value)


def _undb(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)


def min_bit_energy(
    spec: ModulationSpec,
    channel: ChannelModel,
    snr_lo: float,
    snr_hi: float,
    settings: Optional[OptimizerConfig] = None,
    numerics: Optional[NumericsConfig] = None,
    workers: int = 1,
) -> MinBitEnergyResult:
    """Grid scan over log SNR, then golden section on Eb/N0 between the
    grid neighbours of the best point.

    A best grid point on either end of the bracket is reported with
    ``converged=False``; the caller decides whether to widen.
    """
    opt = settings if settings is not None else OptimizerConfig()
    if not (0 < snr_lo < snr_hi) or not math.isfinite(snr_hi):
        raise DomainError(
            f"min_bit_energy exige 0 < snr_lo < snr_hi, recebido {snr_lo}, {snr_hi}."
        )

    def ebn0_at(snr: float) -> float:
        return bit_energy_db(snr, rate_nats(spec, channel, snr, numerics))

    grid = np.geomspace(snr_lo, snr_hi, max(opt.grid_points, 200))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = np.array(list(pool.map(ebn0_at, grid.tolist())))
    else:
        values = np.array([ebn0_at(s) for s in grid])

    diagnostics: Dict[str, object] = {
        "snr_lo": float(snr_lo),
        "snr_hi": float(snr_hi),
        "grid_points": int(grid.size),
    }
    if not np.any(np.isfinite(values)):
        diagnostics["reason"] = "taxa nula em toda a grade"
        return MinBitEnergyResult(math.inf, 0.0, float(grid[0]), False, diagnostics)

    best = int(np.argmin(values))
    if best == 0 or best == grid.size - 1:
        snr_star = float(grid[best])
        diagnostics["reason"] = "minimo na borda da grade"
        diagnostics["edge"] = "snr_lo" if best == 0 else "snr_hi"
        return MinBitEnergyResult(
            ebn0_min_db=float(values[best]),
            se_star=_se_at(spec, channel, snr_star, numerics),
            snr_star=snr_star,
            converged=False,
            diagnostics=diagnostics,
        )

    x_db, y_db = golden_section(
        lambda s_db: ebn0_at(_undb(s_db)),
        _db(grid[best - 1]),
        _db(grid[best + 1]),
        opt.width_db,
    )
    if y_db <= values[best]:
        snr_star, ebn0_min = _undb(x_db), y_db
    else:
        snr_star, ebn0_min = float(grid[best]), float(values[best])
    return MinBitEnergyResult(
        ebn0_min_db=float(ebn0_min),
        se_star=_se_at(spec, channel, snr_star, numerics),
        snr_star=snr_star,
        converged=True,
        diagnostics=diagnostics,
    )


def _se_at(
    spec: ModulationSpec, channel: ChannelModel, snr: float, numerics: Optional[NumericsConfig]
) -> float:
    return spectral_efficiency(rate_nats(spec, channel, snr, numerics), spec.m)


def locate_min_bit_energy(
    spec: ModulationSpec,
    channel: ChannelModel,
    settings: Optional[OptimizerConfig] = None,
    numerics: Optional[NumericsConfig] = None,
    workers: int = 1,
) -> MinBitEnergyResult:
    opt = settings if settings is not None else OptimizerConfig()
    lo, hi = opt.snr_lo, opt.snr_hi
    result = min_bit_energy(spec, channel, lo, hi, opt, numerics, workers)
    retries = 0
    while not result.converged and retries < opt.bracket_retries:
        retries += 1
        lo /= opt.widen_factor
        hi *= opt.widen_factor
        result = min_bit_energy(spec, channel, lo, hi, opt, numerics, workers)
    diagnostics = dict(result.diagnostics)
    diagnostics["retries"] = retries
    return MinBitEnergyResult(
        ebn0_min_db=result.ebn0_min_db,
        se_star=result.se_star,
        snr_star=result.snr_star,
        converged=result.converged,
        diagnostics=diagnostics,
    )


def _run_cells(
    cells: Sequence[Tuple[ModulationSpec, ChannelModel]],
    settings: Optional[OptimizerConfig],
    numerics: Optional[NumericsConfig],
    workers: int,
) -> List[MinBitEnergyResult]:
    def run(cell: Tuple[ModulationSpec, ChannelModel]) -> MinBitEnergyResult:
        return locate_min_bit_energy(cell[0], cell[1], settings, numerics)

    if workers <= 1 or len(cells) < 2:
        return [run(cell) for cell in cells]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, cells))


def sweep_m(
    family: Family,
    channel: ChannelModel,
    m_list: Sequence[int],
    duty: float = 1.0,
    settings: Optional[OptimizerConfig] = None,
    numerics: Optional[NumericsConfig] = None,
    workers: int = 1,
) -> List[Tuple[int, MinBitEnergyResult]]:
    if not m_list:
        raise DomainError("m_list nao pode ser vazia.")
    specs = [ModulationSpec(family=Family(family), m=m, duty=duty) for m in m_list]
    results = _run_cells([(spec, channel) for spec in specs], settings, numerics, workers)
    return [(spec.m, result) for spec, result in zip(specs, results)]


def sweep_duty(
    m: int,
    channel: ChannelModel,
    duty_list: Sequence[float],
    settings: Optional[OptimizerConfig] = None,
    numerics: Optional[NumericsConfig] = None,
    workers: int = 1,
) -> List[Tuple[float, MinBitEnergyResult]]:
    if not duty_list:
        raise DomainError("duty_list nao pode ser vazia.")
    specs = [ModulationSpec.oofsk(m, duty) for duty in duty_list]
    results = _run_cells([(spec, channel) for spec in specs], settings, numerics, workers)
    return [(spec.duty, result) for spec, result in zip(specs, results)]


def sweep_rician_k(
    spec: ModulationSpec,
    kind: ChannelKind,
    k_list: Sequence[float],
    settings: Optional[OptimizerConfig] = None,
    numerics: Optional[NumericsConfig] = None,
    workers: int = 1,
) -> List[Tuple[float, MinBitEnergyResult]]:
    if ChannelKind(kind) is ChannelKind.AWGN:
        raise DomainError("sweep_rician_k exige canal com desvanecimento.")
    channels = [ChannelModel(kind=kind, rician_k=k) for k in k_list]
    results = _run_cells([(spec, channel) for channel in channels], settings, numerics, workers)
    return [(float(channel.rician_k), result) for channel, result in zip(channels, results)]


def logm_snr_ratio(m: int, eps: float, numerics: Optional[NumericsConfig] = None) -> float:
    """C_M(snr)/snr for FSK over AWGN at snr = (1 + eps) ln M."""
    if eps <= 0:
        raise DomainError(f"eps deve ser > 0, recebido {eps!r}.")
    spec = ModulationSpec.fsk(m)
    snr = (1.0 + eps) * math.log(spec.m)
    return rate_nats(spec, ChannelModel.awgn(), snr, numerics) / snr


def schedule_duty(snr: float, eps: float) -> float:
    if eps <= 0:
        raise DomainError(f"eps deve ser > 0, recebido {eps!r}.")
    if not (0.0 < snr < 1.0):
        raise DomainError(f"Agenda exige 0 < snr < 1, recebido {snr!r}.")
    nu = snr / ((1.0 + eps) * math.log(1.0 / snr))
    if nu >= 1.0:
        raise DomainError(f"Agenda gera nu = {nu:.6g} >= 1 em snr = {snr:.6g}.")
    return nu


def duty_cycle_schedule(
    m: int, eps: float, snr: float, numerics: Optional[NumericsConfig] = None
) -> SchedulePoint:
    """Duty cycle nu = snr / ((1 + eps) ln(1/snr)) and the AWGN OOFSK rate there."""
    nu = schedule_duty(snr, eps)
    spec = ModulationSpec.oofsk(m, nu)
    tau = oofsk_threshold_awgn(spec, snr)
    rate = rate_nats(spec, ChannelModel.awgn(), snr, numerics)
    return SchedulePoint(
        snr=snr,
        nu=nu,
        alpha_sq=snr / nu,
        tau=tau,
        rate_nats=rate,
        rate_ratio=rate / snr,
    )


def schedule_tau_ratio_limit(eps: float) -> float:
    """Limit of tau / alpha^2 along the schedule as snr -> 0."""
    if eps <= 0:
        raise DomainError(f"eps deve ser > 0, recebido {eps!r}.")
    return ((1.0 + eps / 2.0) / (1.0 + eps)) ** 2
