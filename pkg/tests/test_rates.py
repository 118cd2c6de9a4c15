import math
import time
import warnings

import numpy as np
import pytest

from fsk_bitenergy.core.errors import ContractError, DomainError
from fsk_bitenergy.numerics import channel as channel_module
from fsk_bitenergy.numerics import quadrature as quadrature_module
from fsk_bitenergy.numerics.channel import (
    ChannelModel,
    FskTransition,
    ModulationSpec,
    coherent_realization_transition,
    fsk_p11_awgn,
    oofsk_transitions_awgn,
    oofsk_transitions_noncoherent,
)
from fsk_bitenergy.numerics.optim import locate_min_bit_energy
from fsk_bitenergy.numerics.rates import (
    WIDEBAND_LIMIT_DB,
    bit_energy_db,
    expect_over_rician,
    fsk_capacity,
    generic_dmc_mi,
    oofsk_rate,
    rate_curve,
    rate_nats,
    rate_point,
    spectral_efficiency,
)


def test_fsk_capacity_extremes():
    assert fsk_capacity(FskTransition(p11=0.25, m=4)) == 0.0
    assert fsk_capacity(FskTransition(p11=1.0, m=4)) == pytest.approx(math.log(4), abs=1e-15)


@pytest.mark.parametrize("m, snr", [(2, 2.0), (4, 3.0), (8, 0.2), (16, 7.0)])
def test_fsk_capacity_matches_generic_mi(m, snr):
    trans = fsk_p11_awgn(m, snr)
    spec = ModulationSpec.fsk(m)
    assert fsk_capacity(trans) == pytest.approx(
        generic_dmc_mi(trans.matrix(), spec.input_distribution()), abs=1e-12
    )


def test_oofsk_rate_matches_generic_mi_on_random_grid():
    rng = np.random.default_rng(7)
    for _ in range(100):
        m = int(rng.choice([2, 3, 4, 8, 16]))
        duty = float(rng.uniform(0.01, 1.0))
        snr = float(10.0 ** rng.uniform(-2.0, 1.0))
        spec = ModulationSpec.oofsk(m, duty)
        trans = oofsk_transitions_awgn(spec, snr)
        assert oofsk_rate(trans, spec) == pytest.approx(
            generic_dmc_mi(trans.matrix(), spec.input_distribution()), abs=1e-12
        )


def test_oofsk_rate_matches_generic_mi_on_random_fading_grid():
    rng = np.random.default_rng(11)
    for _ in range(100):
        m = int(rng.choice([2, 3, 4, 8, 16]))
        duty = float(rng.uniform(0.01, 1.0))
        snr = float(10.0 ** rng.uniform(-2.0, 1.0))
        spec = ModulationSpec.oofsk(m, duty)
        if rng.uniform() < 0.5:
            channel = ChannelModel.noncoherent_rician(float(rng.uniform(0.0, 16.0)))
            trans = oofsk_transitions_noncoherent(spec, snr, channel)
        else:
            h_sq = float(rng.exponential(1.0))
            trans = coherent_realization_transition(spec, snr, h_sq)
        assert oofsk_rate(trans, spec) == pytest.approx(
            generic_dmc_mi(trans.matrix(), spec.input_distribution()), abs=1e-12
        )


def test_oofsk_full_duty_rate_equals_fsk_capacity():
    spec = ModulationSpec.oofsk(8, 1.0)
    rate = oofsk_rate(oofsk_transitions_awgn(spec, 2.0), spec)
    assert rate == pytest.approx(fsk_capacity(fsk_p11_awgn(8, 2.0)), abs=1e-12)


def test_oofsk_rate_contract():
    trans = oofsk_transitions_awgn(ModulationSpec.oofsk(4, 0.5), 1.0)
    with pytest.raises(ContractError):
        oofsk_rate(trans, ModulationSpec.fsk(4))
    with pytest.raises(ContractError):
        oofsk_rate(trans, ModulationSpec.oofsk(8, 0.5))


def test_generic_mi_reference_channels():
    uniform = np.full(4, 0.25)
    assert generic_dmc_mi(np.eye(4), uniform) == pytest.approx(math.log(4), abs=1e-15)
    assert generic_dmc_mi(np.full((4, 4), 0.25), uniform) == 0.0


def test_generic_mi_rejects_bad_input():
    uniform = np.full(2, 0.5)
    with pytest.raises(ContractError):
        generic_dmc_mi(np.array([[0.6, 0.6], [0.5, 0.5]]), uniform)
    with pytest.raises(ContractError):
        generic_dmc_mi(np.eye(2), np.array([0.5, 0.6]))
    with pytest.raises(ContractError):
        generic_dmc_mi(np.eye(3), uniform)
    with pytest.raises(ContractError):
        generic_dmc_mi(np.array([[1.2, -0.2], [0.0, 1.0]]), uniform)


@pytest.mark.parametrize("k", [0.0, 1.0, 4.0])
def test_expect_over_rician_moments(k):
    channel = ChannelModel.coherent_rician(k)
    assert expect_over_rician(lambda x: 1.0, channel) == pytest.approx(1.0, rel=1e-8)
    assert expect_over_rician(lambda x: x, channel) == pytest.approx(1.0, rel=1e-8)


def test_expect_over_rician_without_scatter_evaluates_once():
    calls = []

    def doubled(x):
        calls.append(x)
        return 2.0 * x

    assert expect_over_rician(doubled, ChannelModel.coherent_rician(math.inf)) == 2.0
    assert calls == [1.0]


def test_expect_over_rician_requires_coherent_channel():
    with pytest.raises(ContractError):
        expect_over_rician(lambda x: x, ChannelModel.awgn())


def test_wideband_limit():
    assert WIDEBAND_LIMIT_DB == pytest.approx(-1.5917, abs=1e-4)
    assert bit_energy_db(0.3, 0.3) == pytest.approx(WIDEBAND_LIMIT_DB, abs=1e-15)
    assert math.isinf(bit_energy_db(1.0, 0.0))


@pytest.mark.parametrize("rate", [5e-324, 1e-310, float(np.finfo(float).tiny)])
def test_bit_energy_of_subnormal_rate_is_inf_without_overflow(rate):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert bit_energy_db(1.0, rate) == math.inf
    assert math.isfinite(bit_energy_db(1.0, 1e-300))


def test_spectral_efficiency_per_tone():
    assert spectral_efficiency(math.log(2.0), 2) == pytest.approx(0.5, abs=1e-15)


def test_rate_point_rejects_non_positive_snr():
    with pytest.raises(DomainError):
        rate_point(ModulationSpec.fsk(2), ChannelModel.awgn(), 0.0)


def test_rate_point_fields_consistent():
    point = rate_point(ModulationSpec.fsk(4), ChannelModel.awgn(), 2.0)
    assert point.spectral_eff == pytest.approx(point.rate_nats / math.log(2.0) / 4, rel=1e-14)
    assert point.ebn0_db == pytest.approx(10 * math.log10(2.0 * math.log(2.0) / point.rate_nats))


def test_rate_curve_sorted_and_independent_of_workers():
    spec = ModulationSpec.oofsk(4, 0.3)
    snr_values = [3.0, 0.1, 1.0, 0.5]
    serial = rate_curve(spec, ChannelModel.awgn(), snr_values, workers=1)
    parallel = rate_curve(spec, ChannelModel.awgn(), snr_values, workers=3)
    assert [p.snr for p in serial] == sorted(snr_values)
    assert [p.rate_nats for p in serial] == [p.rate_nats for p in parallel]


@pytest.mark.parametrize("k", [0.0, 1.0, 4.0])
def test_coherent_rate_dominates_noncoherent(k):
    spec = ModulationSpec.fsk(4)
    for snr in (0.5, 2.0, 8.0):
        coherent = rate_nats(spec, ChannelModel.coherent_rician(k), snr)
        noncoherent = rate_nats(spec, ChannelModel.noncoherent_rician(k), snr)
        assert coherent >= noncoherent - 1e-9
        assert noncoherent >= 0.0


@pytest.mark.slow
@pytest.mark.parametrize("m", [2, 8, 48])
@pytest.mark.parametrize(
    "channel",
    [ChannelModel.awgn(), ChannelModel.coherent_rician(1.0), ChannelModel.noncoherent_rician(1.0)],
    ids=["awgn", "coherent", "noncoherent"],
)
def test_rate_has_zero_slope_at_low_snr(m, channel):
    spec = ModulationSpec.fsk(m)
    snrs = [1e-2, 1e-3, 1e-4]
    ratios = [rate_nats(spec, channel, s) / s for s in snrs]
    assert ratios[0] > ratios[1] > ratios[2] > 0
    ebn0 = [bit_energy_db(s, rate_nats(spec, channel, s)) for s in (1e-2, 1e-4)]
    assert ebn0[1] - ebn0[0] > 10.0


@pytest.mark.parametrize("k", [0.0, 1.0])
def test_coherent_fsk_rate_matches_realization_average(k):
    spec = ModulationSpec.fsk(4)
    channel = ChannelModel.coherent_rician(k)
    averaged = expect_over_rician(
        lambda h_sq: fsk_capacity(coherent_realization_transition(spec, 2.0, h_sq)), channel
    )
    assert rate_nats(spec, channel, 2.0) == pytest.approx(averaged, abs=1e-8)


def test_expect_over_rician_vectorized_receives_arrays():
    shapes = []

    def squared(h_sq):
        shapes.append(np.shape(h_sq))
        return h_sq * h_sq

    channel = ChannelModel.coherent_rician(1.0)
    # E|h|^4 = 2 gamma^4 + 4 gamma^2 d^2 + d^4 with d^2 = gamma^2 = 1/2
    assert expect_over_rician(squared, channel, vectorized=True) == pytest.approx(1.75, rel=1e-8)
    assert all(len(shape) == 1 and shape[0] > 1 for shape in shapes)


def test_large_alphabet_coherent_rate_uses_batched_quadrature(monkeypatch):
    def scalar_quadrature(*args, **kwargs):
        raise AssertionError("scalar p11 quadrature used")

    batches = []
    fallbacks = []
    batch = channel_module.integrate_noncentral_batch
    scalar = quadrature_module.integrate_noncentral

    def counting_batch(g, variance_scale, means, **kwargs):
        batches.append(np.size(means))
        return batch(g, variance_scale, means, **kwargs)

    def counting_scalar(*args, **kwargs):
        fallbacks.append(1)
        return scalar(*args, **kwargs)

    monkeypatch.setattr(channel_module, "fsk_p11_quadrature", scalar_quadrature)
    monkeypatch.setattr(channel_module, "integrate_noncentral_batch", counting_batch)
    monkeypatch.setattr(quadrature_module, "integrate_noncentral", counting_scalar)

    rate = rate_nats(ModulationSpec.fsk(48), ChannelModel.coherent_rician(1.0), 2.0)
    assert 0.0 < rate < math.log(48)
    assert 1 <= len(batches) <= 100
    assert len(fallbacks) <= sum(batches) // 20


@pytest.mark.slow
def test_large_alphabet_coherent_minimum_is_fast():
    started = time.perf_counter()
    result = locate_min_bit_energy(ModulationSpec.fsk(48), ChannelModel.coherent_rician(1.0))
    elapsed = time.perf_counter() - started
    assert result.converged
    assert elapsed < 30.0
