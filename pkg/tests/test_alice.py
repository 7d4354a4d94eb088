import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.signal import fftconvolve

from cvqkd_coexist import alice
from cvqkd_coexist.errors import InvalidOrder


def test_uniform_when_unshaped():
    c = alice.build_constellation(256, 0.0, 8.0)
    np.testing.assert_allclose(c.probabilities, 1 / 256, rtol=0, atol=1e-15)


def test_qpsk_variance():
    c = alice.build_constellation(4, 0.0, 2.0)
    assert c.quadrature_variance == pytest.approx(2.0, abs=1e-12)
    np.testing.assert_allclose(np.abs(c.amplitudes.real), np.sqrt(2.0))


def test_shaped_256_brute_force_variance():
    nu = alice.shaping_rate_for_entropy(256, 6.0)
    c = alice.build_constellation(256, nu, 8.0)
    assert c.entropy_bits == pytest.approx(6.0, abs=1e-9)
    direct = sum(p * a.real ** 2 for p, a in zip(c.probabilities, c.amplitudes))
    assert direct == pytest.approx(8.0, abs=1e-9)
    direct_q = sum(p * a.imag ** 2 for p, a in zip(c.probabilities, c.amplitudes))
    assert direct_q == pytest.approx(8.0, abs=1e-9)


def test_probabilities_follow_mb_law():
    c = alice.build_constellation(64, 0.7, 3.0)
    ratio = c.probabilities / np.exp(-0.7 * np.abs(c.points) ** 2)
    np.testing.assert_allclose(ratio, ratio[0], rtol=1e-12)


@given(st.sampled_from([4, 16, 64, 256, 1024]), st.floats(0.0, 5.0), st.floats(0.1, 50.0))
def test_normalization_and_variance(order, nu, va):
    c = alice.build_constellation(order, nu, va)
    assert abs(c.probabilities.sum() - 1) <= 1e-12
    assert np.all(c.probabilities >= 0)
    assert abs(c.quadrature_variance - va) <= 1e-9 * max(1.0, va)


@pytest.mark.parametrize("order", [0, 2, 8, 15])
def test_invalid_order(order):
    with pytest.raises(InvalidOrder):
        alice.qam_grid(order)


def test_pilot_mask_alternates():
    np.testing.assert_array_equal(alice.pilot_mask(4, 0.5), [True, False, True, False])
    m = alice.pilot_mask(100_001, 0.5)
    assert np.all(m[::2]) and not np.any(m[1::2])


@given(st.integers(10, 5000), st.floats(0.05, 0.95))
def test_pilot_fraction(n, pf):
    m = alice.pilot_mask(n, pf)
    assert m.size == n
    assert abs(m.mean() - pf) <= 1 / n + 1e-12


def test_frame_determinism_and_pilot_power():
    c = alice.build_constellation(256, alice.shaping_rate_for_entropy(256, 6), 8.0)
    spec = alice.FrameSpec()
    a = alice.generate_frame(c, spec, 10_000, 42)
    b = alice.generate_frame(c, spec, 10_000, 42)
    np.testing.assert_array_equal(a.tx_symbols, b.tx_symbols)
    np.testing.assert_allclose(np.abs(a.pilots.real), np.sqrt(8.0))
    assert not np.array_equal(a.data, alice.generate_frame(c, spec, 10_000, 43).data)


def test_frame_data_variance():
    c = alice.build_constellation(256, alice.shaping_rate_for_entropy(256, 6), 8.0)
    f = alice.generate_frame(c, alice.FrameSpec(), 1_000_000, 5)
    x = f.data
    # sd of a sample variance: sqrt((m4 - var^2) / n)
    a = c.amplitudes.real
    m4 = np.sum(c.probabilities * a ** 4)
    sigma = np.sqrt((m4 - 64.0) / x.size)
    for q in (x.real, x.imag):
        assert abs(np.mean(q ** 2) - 8.0) < 3 * sigma


def test_rrc_unit_energy_and_impulse_peak():
    spec = alice.FrameSpec()
    h = alice.rrc_taps(spec.rrc_rolloff, spec.samples_per_symbol, spec.rrc_span)
    assert np.sum(h ** 2) == pytest.approx(1.0, abs=1e-12)
    tx = np.zeros(64, complex)
    tx[10] = 1.0
    frame = alice.SymbolFrame(tx, alice.pilot_mask(64, 0.5), spec)
    w = alice.pulse_shape(frame)
    assert np.argmax(np.abs(w)) == 10 * 8 + (h.size - 1) // 2
    np.testing.assert_allclose(w[80:80 + h.size].real, h, atol=1e-15)


def test_samples_per_symbol_at_nominal_rates():
    spec = alice.FrameSpec(symbol_rate=250e6, samples_per_symbol=8)
    assert spec.sample_rate == 2e9


def test_matched_filter_roundtrip():
    c = alice.build_constellation(256, 0.0, 8.0)
    spec = alice.FrameSpec()
    f = alice.generate_frame(c, spec, 5_000, 9)
    w = alice.pulse_shape(f)
    h = alice.rrc_taps(spec.rrc_rolloff, spec.samples_per_symbol, spec.rrc_span)
    y = fftconvolve(w, h[::-1])[h.size - 1::8][: len(f)]
    core = slice(100, len(f) - 100)
    rms = np.sqrt(np.mean(np.abs(y[core] - f.tx_symbols[core]) ** 2) / np.mean(np.abs(f.tx_symbols) ** 2))
    assert rms < 1e-3
