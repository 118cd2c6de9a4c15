import math

import numpy as np
import pytest

from fsk_bitenergy.core.errors import ContractError, DomainError, NumericalError
from fsk_bitenergy.numerics import channel as channel_module
from fsk_bitenergy.numerics.channel import (
    ChannelKind,
    ChannelModel,
    Family,
    FskTransition,
    ModulationSpec,
    coherent_realization_transition,
    expected_transition_entries,
    fsk_p11_awgn,
    fsk_p11_awgn_array,
    fsk_p11_noncoherent_rician,
    fsk_p11_quadrature,
    fsk_p11_sum,
    oofsk_pll_quadrature,
    oofsk_pll_sum,
    oofsk_threshold,
    oofsk_threshold_awgn,
    oofsk_threshold_noncoherent,
    oofsk_transitions_awgn,
    oofsk_transitions_noncoherent,
    transition_for,
)
from fsk_bitenergy.numerics.quadrature import integrate_noncentral
from fsk_bitenergy.numerics.specfun import log_bessel_i0


# ---------------------------------------------------------------------------
# value types


def test_modulation_spec_validation():
    with pytest.raises(DomainError):
        ModulationSpec(Family.FSK, 4, 0.5)
    with pytest.raises(DomainError):
        ModulationSpec.fsk(1)
    with pytest.raises(DomainError):
        ModulationSpec.oofsk(4, 0.0)
    with pytest.raises(DomainError):
        ModulationSpec.oofsk(4, 1.5)
    spec = ModulationSpec("oofsk", 4, 0.25)
    assert spec.family is Family.OOFSK
    assert spec.alphabet_size == 5


def test_input_distribution_sums_to_one():
    dist = ModulationSpec.oofsk(8, 0.1).input_distribution()
    assert dist[0] == pytest.approx(0.9)
    np.testing.assert_allclose(dist[1:], 0.1 / 8)
    assert dist.sum() == pytest.approx(1.0, abs=1e-15)


def test_channel_model_validation():
    with pytest.raises(DomainError):
        ChannelModel(ChannelKind.AWGN, rician_k=1.0)
    with pytest.raises(DomainError):
        ChannelModel.noncoherent_rician(-0.5)
    with pytest.raises(DomainError):
        ChannelModel(ChannelKind.COHERENT_RICIAN)


@pytest.mark.parametrize("k", [0.0, 1.0, 4.0, math.inf])
def test_rician_parameters_have_unit_power(k):
    channel = ChannelModel.coherent_rician(k)
    assert channel.d_sq + channel.gamma_sq == pytest.approx(1.0, abs=1e-15)


def test_rayleigh_and_pure_los_parameters():
    assert ChannelModel.noncoherent_rician(0.0).d_sq == 0.0
    assert ChannelModel.noncoherent_rician(math.inf).gamma_sq == 0.0


# ---------------------------------------------------------------------------
# FSK


@pytest.mark.parametrize("m", [2, 8, 48])
def test_fsk_p11_is_chance_at_zero_snr(m):
    assert fsk_p11_awgn(m, 0.0).p11 == pytest.approx(1.0 / m, rel=1e-9)


def test_fsk_p11_binary_closed_form():
    assert fsk_p11_awgn(2, 2.0).p11 == pytest.approx(1.0 - 0.5 * math.exp(-1.0), abs=1e-12)


def test_fsk_p11_saturates_at_high_snr():
    assert fsk_p11_awgn(4, 200.0).p11 == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("m", [2, 4, 8, 16, 30])
def test_fsk_sum_agrees_with_quadrature(m):
    for snr in np.geomspace(1e-3, 30.0, 7):
        summed = fsk_p11_sum(m, 1.0, float(snr))
        integrated = fsk_p11_quadrature(m, float(snr), 1.0, 1.0)
        assert summed == pytest.approx(integrated, abs=1e-9)


def test_fsk_large_alphabet_quadrature_matches_extended_sum():
    assert fsk_p11_awgn(48, 10.0).p11 == pytest.approx(fsk_p11_sum(48, 1.0, 10.0), abs=1e-9)


def test_fsk_p11_monotone_in_snr():
    grid = np.geomspace(1e-3, 100.0, 25)
    fading = ChannelModel.noncoherent_rician(1.0)
    for m in (2, 8, 48):
        awgn = [fsk_p11_awgn(m, float(s)).p11 for s in grid]
        faded = [fsk_p11_noncoherent_rician(m, float(s), fading).p11 for s in grid]
        for values in (awgn, faded):
            assert all(b >= a - 1e-9 for a, b in zip(values, values[1:]))


def test_noncoherent_without_scatter_equals_awgn():
    los = ChannelModel.noncoherent_rician(math.inf)
    assert fsk_p11_noncoherent_rician(8, 3.0, los).p11 == pytest.approx(
        fsk_p11_awgn(8, 3.0).p11, abs=1e-14
    )


def test_noncoherent_fsk_sum_agrees_with_quadrature():
    channel = ChannelModel.noncoherent_rician(1.0)
    snr = 5.0
    summed = fsk_p11_noncoherent_rician(8, snr, channel).p11
    integrated = fsk_p11_quadrature(8, snr, 1.0 + channel.gamma_sq * snr, channel.d_sq)
    assert summed == pytest.approx(integrated, abs=1e-9)


def test_noncoherent_fsk_rejects_other_channels():
    with pytest.raises(ContractError):
        fsk_p11_noncoherent_rician(4, 1.0, ChannelModel.awgn())


def test_fsk_transition_matrix_is_stochastic():
    matrix = FskTransition(p11=0.7, m=5).matrix()
    np.testing.assert_allclose(matrix.sum(axis=1), 1.0, atol=1e-15)
    assert matrix[2, 2] == 0.7


# ---------------------------------------------------------------------------
# OOFSK threshold


def test_threshold_is_zero_at_full_duty():
    assert oofsk_threshold_awgn(ModulationSpec.oofsk(8, 1.0), 2.0) == 0.0


def test_awgn_threshold_solves_bessel_equation():
    spec = ModulationSpec.oofsk(8, 0.01)
    snr = 0.1
    alpha_sq = snr / spec.duty
    tau = oofsk_threshold_awgn(spec, snr)
    log_xi = math.log(8) + math.log(0.99) - math.log(0.01) + alpha_sq
    assert log_bessel_i0(2.0 * math.sqrt(alpha_sq * tau)) == pytest.approx(log_xi, abs=1e-9)


def test_threshold_requires_positive_snr_and_oofsk():
    with pytest.raises(DomainError):
        oofsk_threshold_awgn(ModulationSpec.oofsk(4, 0.5), 0.0)
    with pytest.raises(ContractError):
        oofsk_threshold_awgn(ModulationSpec.fsk(4), 1.0)


def test_noncoherent_threshold_without_scatter_equals_awgn():
    spec = ModulationSpec.oofsk(8, 0.1)
    los = ChannelModel.noncoherent_rician(math.inf)
    assert oofsk_threshold_noncoherent(spec, 1.0, los) == pytest.approx(
        oofsk_threshold_awgn(spec, 1.0), rel=1e-12
    )


def test_noncoherent_threshold_solves_likelihood_equation():
    spec = ModulationSpec.oofsk(8, 0.1)
    channel = ChannelModel.noncoherent_rician(1.0)
    snr = 1.0
    alpha_sq = snr / spec.duty
    spread = alpha_sq * channel.gamma_sq
    c = spread / (1.0 + spread)
    b = 2.0 * math.sqrt(alpha_sq * channel.d_sq) / (1.0 + spread)
    log_xi = (
        math.log(8) + math.log(0.9) - math.log(0.1)
        + math.log1p(spread)
        + alpha_sq * channel.d_sq / (1.0 + spread)
    )
    tau = oofsk_threshold_noncoherent(spec, snr, channel)
    assert c * tau + log_bessel_i0(b * math.sqrt(tau)) == pytest.approx(log_xi, abs=1e-10)


def test_rayleigh_threshold_is_linear_solution():
    spec = ModulationSpec.oofsk(4, 0.2)
    channel = ChannelModel.noncoherent_rician(0.0)
    alpha_sq = 2.0 / 0.2
    log_xi = math.log(4) + math.log(0.8) - math.log(0.2) + math.log1p(alpha_sq)
    expected = log_xi * (1.0 + alpha_sq) / alpha_sq
    assert oofsk_threshold_noncoherent(spec, 2.0, channel) == pytest.approx(expected, rel=1e-12)


def test_coherent_threshold_at_zero_gain():
    spec = ModulationSpec.oofsk(8, 0.1)
    channel = ChannelModel.coherent_rician(1.0)
    assert math.isinf(oofsk_threshold(spec, 1.0, channel, h_sq=0.0))
    assert oofsk_threshold(ModulationSpec.oofsk(2, 0.9), 1.0, channel, h_sq=0.0) == 0.0


# ---------------------------------------------------------------------------
# OOFSK transitions


@pytest.mark.parametrize(
    "m, duty, snr",
    [(2, 0.5, 1.0), (4, 0.3, 2.0), (8, 0.01, 0.1), (16, 0.05, 0.5), (8, 0.9, 20.0)],
)
def test_oofsk_rows_sum_to_one(m, duty, snr):
    trans = oofsk_transitions_awgn(ModulationSpec.oofsk(m, duty), snr)
    assert trans.p00 + m * trans.pl0 == pytest.approx(1.0, abs=1e-12)
    assert trans.p0l + trans.pll + (m - 1) * trans.plm == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(trans.matrix().sum(axis=1), 1.0, atol=1e-12)


def test_oofsk_full_duty_collapses_to_fsk():
    trans = oofsk_transitions_awgn(ModulationSpec.oofsk(8, 1.0), 2.0)
    assert trans.p00 == 0.0
    assert trans.p0l == 0.0
    assert trans.pll == pytest.approx(fsk_p11_awgn(8, 2.0).p11, abs=1e-14)

    channel = ChannelModel.noncoherent_rician(1.0)
    faded = oofsk_transitions_noncoherent(ModulationSpec.oofsk(8, 1.0), 2.0, channel)
    assert faded.pll == pytest.approx(fsk_p11_noncoherent_rician(8, 2.0, channel).p11, abs=1e-14)


def test_oofsk_low_snr_is_uninformative():
    trans = oofsk_transitions_awgn(ModulationSpec.oofsk(4, 0.5), 1e-8)
    assert abs(trans.pll - trans.plm) < 1e-6


@pytest.mark.parametrize("m, duty, snr", [(2, 0.5, 1.0), (4, 0.3, 2.0), (8, 0.01, 0.1)])
def test_oofsk_marcum_sum_agrees_with_quadrature(m, duty, snr):
    spec = ModulationSpec.oofsk(m, duty)
    alpha_sq = snr / duty
    tau = oofsk_threshold_awgn(spec, snr)
    summed = oofsk_pll_sum(m, tau, 1.0, alpha_sq)
    integrated = oofsk_pll_quadrature(m, tau, 1.0, alpha_sq)
    assert summed == pytest.approx(integrated, abs=1e-9)


def test_oofsk_noncoherent_without_scatter_equals_awgn():
    spec = ModulationSpec.oofsk(8, 0.1)
    los = ChannelModel.noncoherent_rician(math.inf)
    faded = oofsk_transitions_noncoherent(spec, 1.0, los).entries()
    plain = oofsk_transitions_awgn(spec, 1.0).entries()
    for name, value in plain.items():
        assert faded[name] == pytest.approx(value, abs=1e-12)


def test_oofsk_noncoherent_strong_los_approaches_awgn():
    spec = ModulationSpec.oofsk(8, 0.1)
    near = ChannelModel.noncoherent_rician(1e6)
    faded = oofsk_transitions_noncoherent(spec, 1.0, near).entries()
    plain = oofsk_transitions_awgn(spec, 1.0).entries()
    for name, value in plain.items():
        assert faded[name] == pytest.approx(value, abs=1e-5)
    assert fsk_p11_noncoherent_rician(8, 1.0, near).p11 == pytest.approx(
        fsk_p11_awgn(8, 1.0).p11, abs=1e-5
    )


# ---------------------------------------------------------------------------
# coherent realizations and dispatch


def test_coherent_realization_uses_effective_snr():
    fsk = ModulationSpec.fsk(4)
    assert coherent_realization_transition(fsk, 1.0, 1.0).p11 == pytest.approx(
        fsk_p11_awgn(4, 1.0).p11, abs=1e-15
    )
    assert coherent_realization_transition(fsk, 1.0, 2.0).p11 == pytest.approx(
        fsk_p11_awgn(4, 2.0).p11, abs=1e-15
    )
    assert coherent_realization_transition(fsk, 1.0, 0.0).p11 == pytest.approx(0.25, abs=1e-15)


def test_coherent_realization_deep_fade_never_transmits_detectably():
    trans = coherent_realization_transition(ModulationSpec.oofsk(8, 0.1), 1.0, 0.0)
    assert trans.p00 == 1.0
    assert trans.p0l == 1.0
    assert math.isinf(trans.tau)


def test_transition_for_rejects_coherent_channel():
    with pytest.raises(ContractError):
        transition_for(ModulationSpec.fsk(2), ChannelModel.coherent_rician(1.0), 1.0)


def test_expected_entries_without_scatter_equal_awgn():
    spec = ModulationSpec.oofsk(4, 0.3)
    coherent = expected_transition_entries(spec, ChannelModel.coherent_rician(math.inf), 2.0)
    plain = oofsk_transitions_awgn(spec, 2.0).entries()
    for name, value in plain.items():
        assert coherent[name] == pytest.approx(value, abs=1e-14)


def test_expected_entries_remain_stochastic():
    entries = expected_transition_entries(
        ModulationSpec.fsk(4), ChannelModel.coherent_rician(1.0), 2.0
    )
    assert entries["p11"] + 3 * entries["plm"] == pytest.approx(1.0, abs=1e-7)
    assert 0.25 < entries["p11"] < 1.0


def test_threshold_solver_failure_is_numerical(monkeypatch):
    def failing_brentq(*args, **kwargs):
        raise RuntimeError("Failed to converge after 500 iterations")

    monkeypatch.setattr(channel_module, "brentq", failing_brentq)
    with pytest.raises(NumericalError) as info:
        oofsk_threshold_noncoherent(
            ModulationSpec.oofsk(8, 0.1), 1.0, ChannelModel.noncoherent_rician(1.0)
        )
    assert info.value.diagnostics["m"] == 8


@pytest.mark.parametrize("m", [8, 48])
def test_awgn_p11_array_matches_scalar(m):
    snrs = np.array([0.0, 0.5, 2.0, 10.0, 40.0])
    expected = [fsk_p11_awgn(m, float(s)).p11 for s in snrs]
    np.testing.assert_allclose(fsk_p11_awgn_array(m, snrs), expected, rtol=0.0, atol=5e-10)


def test_awgn_p11_array_keeps_shape_and_rejects_bad_snr():
    grid = np.array([[0.0, 1.0], [2.0, 3.0]])
    assert fsk_p11_awgn_array(4, grid).shape == (2, 2)
    with pytest.raises(DomainError):
        fsk_p11_awgn_array(4, np.array([1.0, -0.5]))
    with pytest.raises(DomainError):
        fsk_p11_awgn_array(4, np.array([math.nan]))


@pytest.mark.parametrize("k", [0.0, 1.0])
def test_coherent_fsk_entries_match_realization_average(k):
    spec = ModulationSpec.fsk(4)
    channel = ChannelModel.coherent_rician(k)
    averaged = integrate_noncentral(
        lambda values: np.array(
            [coherent_realization_transition(spec, 2.0, float(h)).p11 for h in values]
        ),
        channel.gamma_sq,
        channel.d_sq,
        epsrel=1e-10,
    ).value
    entries = expected_transition_entries(spec, channel, 2.0)
    assert entries["p11"] == pytest.approx(averaged, abs=1e-8)
    assert entries["plm"] == pytest.approx((1.0 - averaged) / 3, abs=1e-8)


@pytest.mark.parametrize("k", [0.5, 1.0, 4.0, 16.0])
@pytest.mark.parametrize("m, duty, snr", [(2, 0.5, 1.0), (8, 0.1, 0.5), (16, 0.05, 2.0), (48, 0.2, 1.0)])
def test_noncoherent_oofsk_rows_sum_to_one(k, m, duty, snr):
    trans = oofsk_transitions_noncoherent(
        ModulationSpec.oofsk(m, duty), snr, ChannelModel.noncoherent_rician(k)
    )
    matrix = trans.matrix()
    np.testing.assert_allclose(matrix.sum(axis=1), np.ones(m + 1), atol=1e-9)
    assert np.all(matrix >= 0.0)
