from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from ..core.config import AppConfig, config_summary
from ..core.runtime_log import append_runtime_log
from .channel import ChannelKind, ChannelModel, Family, ModulationSpec
from .mc import McConfig, compare_with_analytic, estimate_rate, simulate_transitions
from .optim import duty_cycle_schedule, schedule_duty, schedule_tau_ratio_limit, sweep_m
from .rates import rate_curve, rate_nats

__all__ = [
    "CURVE_HEADERS",
    "MC_HEADERS",
    "MINBE_HEADERS",
    "SCHEDULE_HEADERS",
    "format_value",
    "render_csv",
    "run_curve_flow",
    "run_mc_flow",
    "run_minbe_flow",
    "run_schedule_flow",
    "write_csv",
]

CURVE_HEADERS = ("snr_db", "rate_nats", "spectral_eff_bpshz", "ebn0_db")
MINBE_HEADERS = (
    "m",
    "duty",
    "channel",
    "rician_k",
    "ebn0_min_db",
    "se_star_bpshz",
    "snr_star_db",
    "converged",
)
MC_HEADERS = ("entry", "analytic", "empirical", "sigma", "z")
SCHEDULE_HEADERS = ("snr_db", "nu", "alpha_sq", "tau", "rate_nats", "rate_over_snr")


def format_value(value: object) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return f"{value:.12g}"
    if value is None:
        return ""
    return str(value)


def _format_rows(rows: Iterable[Sequence[object]]) -> List[List[str]]:
    return [[format_value(item) for item in row] for row in rows]


def render_csv(headers: Sequence[str], rows: Iterable[Sequence[object]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(list(headers))
    writer.writerows(_format_rows(rows))
    return buffer.getvalue()


def write_csv(path: Path, headers: Sequence[str], rows: Iterable[Sequence[object]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(list(headers))
        writer.writerows(_format_rows(rows))


def _emit(
    report: Dict[str, object],
    headers: Sequence[str],
    rows: List[Sequence[object]],
    output: Optional[Path],
) -> Dict[str, object]:
    report["rows"] = len(rows)
    if output is None:
        report["csv_text"] = render_csv(headers, rows)
    else:
        write_csv(output, headers, rows)
        report["output"] = str(output)
    return report


def _log(config: AppConfig, event_type: str, payload: Dict[str, object]) -> None:
    try:
        append_runtime_log(config, event_type, payload)
    except OSError:
        pass


def _db(value: float) -> float:
    return 10.0 * math.log10(value)


def _workers(config: AppConfig, workers: Optional[int]) -> int:
    return workers if workers is not None else config.execution.workers


def _channel_payload(channel: ChannelModel) -> Dict[str, object]:
    return {"channel": channel.label(), "rician_k": channel.rician_k}


def run_curve_flow(
    config: AppConfig,
    spec: ModulationSpec,
    channel: ChannelModel,
    snr_db_values: Sequence[float],
    workers: Optional[int] = None,
    output: Optional[Path] = None,
) -> Dict[str, object]:
    grid_db = sorted(float(v) for v in snr_db_values)
    points = rate_curve(
        spec,
        channel,
        [10.0 ** (v / 10.0) for v in grid_db],
        workers=_workers(config, workers),
        numerics=config.numerics,
    )
    rows: List[Tuple[object, ...]] = [
        (snr_db, point.rate_nats, point.spectral_eff, point.ebn0_db)
        for snr_db, point in zip(grid_db, points)
    ]
    finite = [point.ebn0_db for point in points if math.isfinite(point.ebn0_db)]
    report: Dict[str, object] = {
        "flow": "curve",
        "modulation": spec.family.value,
        "m": spec.m,
        "duty": spec.duty,
        **_channel_payload(channel),
        "min_ebn0_db": min(finite) if finite else None,
        "config": config_summary(config),
    }
    report = _emit(report, CURVE_HEADERS, rows, output)
    _log(config, "curve_written", {k: v for k, v in report.items() if k != "csv_text"})
    return report


def run_minbe_flow(
    config: AppConfig,
    family: Family,
    kind: ChannelKind,
    m_list: Sequence[int],
    duty_list: Sequence[float] = (1.0,),
    rician_k_list: Sequence[Optional[float]] = (None,),
    workers: Optional[int] = None,
    output: Optional[Path] = None,
) -> Dict[str, object]:
    rows: List[Tuple[object, ...]] = []
    warnings: List[Dict[str, object]] = []
    for k in rician_k_list:
        channel = ChannelModel(kind=kind, rician_k=k)
        for duty in duty_list:
            results = sweep_m(
                family,
                channel,
                m_list,
                duty=duty,
                settings=config.optimizer,
                numerics=config.numerics,
                workers=_workers(config, workers),
            )
            for m, result in results:
                rows.append(
                    (
                        m,
                        float(duty),
                        channel.label(),
                        channel.rician_k,
                        result.ebn0_min_db,
                        result.se_star,
                        _db(result.snr_star),
                        result.converged,
                    )
                )
                if not result.converged:
                    warning = {
                        "m": m,
                        "duty": float(duty),
                        **_channel_payload(channel),
                        "diagnostics": result.diagnostics,
                    }
                    warnings.append(warning)
                    _log(config, "minbe_not_converged", warning)

    rows.sort(key=lambda row: (_sort_k(row[3]), row[0], -row[1]))
    report: Dict[str, object] = {
        "flow": "minbe",
        "modulation": Family(family).value,
        "channel": ChannelKind(kind).value,
        "warnings": warnings,
        "config": config_summary(config),
    }
    report = _emit(report, MINBE_HEADERS, rows, output)
    _log(config, "minbe_finished", {k: v for k, v in report.items() if k != "csv_text"})
    return report


def _sort_k(value: object) -> float:
    return -1.0 if value is None else float(value)


def run_mc_flow(
    config: AppConfig,
    spec: ModulationSpec,
    channel: ChannelModel,
    snr_db: float,
    trials: Optional[int] = None,
    seed: Optional[int] = None,
    workers: Optional[int] = None,
    output: Optional[Path] = None,
) -> Dict[str, object]:
    mc_config = McConfig(
        spec=spec,
        channel=channel,
        snr=10.0 ** (snr_db / 10.0),
        trials_per_input=trials if trials is not None else config.mc.trials_per_input,
        seed=seed if seed is not None else config.mc.seed,
        block_size=config.mc.block_size,
        workers=_workers(config, workers),
    )
    empirical = simulate_transitions(mc_config)
    comparisons = compare_with_analytic(mc_config, empirical, config.numerics)
    rows = [(c.entry, c.analytic, c.empirical, c.sigma, c.z) for c in comparisons]
    max_abs_z = max(abs(c.z) for c in comparisons)
    report: Dict[str, object] = {
        "flow": "mc",
        "modulation": spec.family.value,
        "m": spec.m,
        "duty": spec.duty,
        **_channel_payload(channel),
        "snr_db": snr_db,
        "trials_per_input": mc_config.trials_per_input,
        "seed": mc_config.seed,
        "max_abs_z": max_abs_z,
        "z_threshold": config.mc.z_threshold,
        "passed": max_abs_z <= config.mc.z_threshold,
        "rate_empirical_nats": estimate_rate(mc_config, empirical),
        "rate_analytic_nats": rate_nats(spec, channel, mc_config.snr, config.numerics),
    }
    report = _emit(report, MC_HEADERS, rows, output)
    _log(config, "mc_compared", {k: v for k, v in report.items() if k != "csv_text"})
    return report


def run_schedule_flow(
    config: AppConfig,
    m: int,
    eps: float,
    snr_db_values: Sequence[float],
    output: Optional[Path] = None,
) -> Dict[str, object]:
    snr_values = [10.0 ** (v / 10.0) for v in snr_db_values]
    for snr in snr_values:
        schedule_duty(snr, eps)
    points = [duty_cycle_schedule(m, eps, snr, config.numerics) for snr in snr_values]
    rows = [
        (snr_db, p.nu, p.alpha_sq, p.tau, p.rate_nats, p.rate_ratio)
        for snr_db, p in zip(snr_db_values, points)
    ]
    ratios = [p.rate_ratio for p in points]
    report: Dict[str, object] = {
        "flow": "schedule",
        "m": m,
        "eps": eps,
        "tau_ratio_limit": schedule_tau_ratio_limit(eps),
        "rate_ratio_limit": 1.0 / (1.0 + eps),
        "rate_ratio_increasing": all(b > a for a, b in zip(ratios, ratios[1:])),
        "config": config_summary(config),
    }
    report = _emit(report, SCHEDULE_HEADERS, rows, output)
    _log(config, "schedule_written", {k: v for k, v in report.items() if k != "csv_text"})
    return report
