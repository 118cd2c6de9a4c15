"""Seeded Monte Carlo estimate of the hard-decision transition matrix.

Every (input symbol, trial block) pair draws from its own Philox stream
keyed by ``SeedSequence(seed, spawn_key=(input, block))``, so the counts
depend only on the configuration and never on the number of workers.
Noise and fading use separate child streams.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..core.config import NumericsConfig
from ..core.errors import DomainError
from .channel import (
    ChannelKind,
    ChannelModel,
    Family,
    ModulationSpec,
    expected_transition_entries,
    oofsk_threshold,
)
from .rates import generic_dmc_mi
from .specfun import bessel_i0_inverse_array

__all__ = [
    "EmpiricalTransitions",
    "EntryComparison",
    "McConfig",
    "compare_with_analytic",
    "estimate_rate",
    "simulate_transitions",
]


@dataclass(frozen=True)
class McConfig:
    spec: ModulationSpec
    channel: ChannelModel
    snr: float
    trials_per_input: int
    seed: int
    block_size: int = 65536
    workers: int = 1

    def __post_init__(self) -> None:
        if not math.isfinite(self.snr) or self.snr < 0:
            raise DomainError(f"snr deve ser finito e >= 0, recebido {self.snr!r}.")
        if self.spec.family is Family.OOFSK and self.snr == 0:
            raise DomainError("OOFSK exige snr > 0 (limiar indefinido).")
        if self.trials_per_input < 1:
            raise DomainError("trials_per_input deve ser >= 1.")
        if self.block_size < 1:
            raise DomainError("block_size deve ser >= 1.")
        if self.seed < 0:
            raise DomainError("seed deve ser >= 0.")


@dataclass(frozen=True)
class EmpiricalTransitions:
    counts: np.ndarray
    probs: np.ndarray
    trials_per_input: int


@dataclass(frozen=True)
class EntryComparison:
    entry: str
    analytic: float
    empirical: float
    sigma: float
    z: float
    trials: int


def _block_generators(
    seed: int, symbol: int, block: int
) -> Tuple[np.random.Generator, np.random.Generator]:
    root = np.random.SeedSequence(seed, spawn_key=(symbol, block))
    noise_seq, fading_seq = root.spawn(2)
    return (
        np.random.Generator(np.random.Philox(noise_seq)),
        np.random.Generator(np.random.Philox(fading_seq)),
    )


def _complex_normal(rng: np.random.Generator, shape: Tuple[int, ...]) -> np.ndarray:
    draws = rng.standard_normal(shape + (2,))
    return (draws[..., 0] + 1j * draws[..., 1]) * math.sqrt(0.5)


def _fading(config: McConfig, rng: np.random.Generator, size: int) -> np.ndarray:
    if not config.channel.is_fading:
        return np.ones(size, dtype=complex)
    scatter = _complex_normal(rng, (size,))
    return math.sqrt(config.channel.d_sq) + math.sqrt(config.channel.gamma_sq) * scatter


def _coherent_thresholds(config: McConfig, h_sq: np.ndarray) -> np.ndarray:
    spec = config.spec
    if spec.duty >= 1.0:
        return np.zeros_like(h_sq)
    alpha_sq = config.snr * h_sq / spec.duty
    log_prior = math.log(spec.m) + math.log1p(-spec.duty) - math.log(spec.duty)
    log_xi = log_prior + alpha_sq
    tau = np.zeros_like(h_sq)
    active = (log_xi > 0) & (alpha_sq > 0)
    if np.any(active):
        roots = bessel_i0_inverse_array(log_xi[active])
        tau[active] = roots * roots / (4.0 * alpha_sq[active])
    dead = alpha_sq == 0
    if np.any(dead):
        tau[dead] = oofsk_threshold(spec, config.snr, config.channel, h_sq=0.0)
    return tau


def _simulate_block(
    config: McConfig, symbol: int, block: int, size: int, fixed_tau: Optional[float]
) -> np.ndarray:
    spec = config.spec
    noise_rng, fading_rng = _block_generators(config.seed, symbol, block)
    received = _complex_normal(noise_rng, (size, spec.m))
    h = _fading(config, fading_rng, size)

    if spec.family is Family.FSK:
        received[:, symbol] += math.sqrt(config.snr) * h
    elif symbol > 0:
        received[:, symbol - 1] += math.sqrt(config.snr / spec.duty) * h

    energy = received.real**2 + received.imag**2
    best = np.argmax(energy, axis=1)
    if spec.family is Family.FSK:
        decisions = best
    else:
        peak = energy[np.arange(size), best]
        tau = fixed_tau if fixed_tau is not None else _coherent_thresholds(config, np.abs(h) ** 2)
        decisions = np.where(peak > tau, best + 1, 0)
    return np.bincount(decisions, minlength=spec.alphabet_size)


def simulate_transitions(config: McConfig) -> EmpiricalTransitions:
    spec = config.spec
    size = spec.alphabet_size
    fixed_tau: Optional[float] = None
    if spec.family is Family.OOFSK:
        if config.channel.kind is not ChannelKind.COHERENT_RICIAN:
            fixed_tau = oofsk_threshold(spec, config.snr, config.channel)
        elif config.channel.gamma_sq == 0:
            fixed_tau = oofsk_threshold(spec, config.snr, config.channel, h_sq=config.channel.d_sq)

    blocks = math.ceil(config.trials_per_input / config.block_size)
    tasks: List[Tuple[int, int, int]] = []
    for symbol in range(size):
        for block in range(blocks):
            start = block * config.block_size
            tasks.append((symbol, block, min(config.block_size, config.trials_per_input - start)))

    def run(task: Tuple[int, int, int]) -> Tuple[int, np.ndarray]:
        symbol, block, count = task
        return symbol, _simulate_block(config, symbol, block, count, fixed_tau)

    counts = np.zeros((size, size), dtype=np.int64)
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(run, tasks))
    else:
        results = [run(task) for task in tasks]
    for symbol, row in results:
        counts[symbol] += row
    return EmpiricalTransitions(
        counts=counts,
        probs=counts / float(config.trials_per_input),
        trials_per_input=config.trials_per_input,
    )


def estimate_rate(config: McConfig, empirical: Optional[EmpiricalTransitions] = None) -> float:
    """Plug-in mutual information of the empirical matrix, in nats."""
    sample = empirical if empirical is not None else simulate_transitions(config)
    return generic_dmc_mi(sample.probs, config.spec.input_distribution())


def _pooled_cells(
    spec: ModulationSpec, counts: np.ndarray, trials: int
) -> Dict[str, Tuple[int, int]]:
    m = spec.m
    tones = np.arange(m)
    if spec.family is Family.FSK:
        return {
            "p11": (int(counts[tones, tones].sum()), m * trials),
            "plm": (int(counts[tones, (tones + 1) % m].sum()), m * trials),
        }
    rows = tones + 1
    return {
        "p00": (int(counts[0, 0]), trials),
        "pl0": (int(counts[0, 1]), trials),
        "pll": (int(counts[rows, rows].sum()), m * trials),
        "p0l": (int(counts[rows, 0].sum()), m * trials),
        "plm": (int(counts[rows, rows % m + 1].sum()), m * trials),
    }


def compare_with_analytic(
    config: McConfig,
    empirical: EmpiricalTransitions,
    numerics: Optional[NumericsConfig] = None,
) -> List[EntryComparison]:
    """Per-entry binomial z-scores of the empirical counts against the formulas."""
    analytic = expected_transition_entries(config.spec, config.channel, config.snr, numerics)
    comparisons: List[EntryComparison] = []
    cells = _pooled_cells(config.spec, empirical.counts, empirical.trials_per_input)
    for entry, (hits, trials) in cells.items():
        p = analytic[entry]
        observed = hits / trials
        sigma = math.sqrt(max(p * (1.0 - p), 0.0) / trials)
        if sigma > 0:
            z = (observed - p) / sigma
        else:
            z = 0.0 if observed == p else math.inf
        comparisons.append(
            EntryComparison(
                entry=entry, analytic=p, empirical=observed, sigma=sigma, z=z, trials=trials
            )
        )
    return comparisons
