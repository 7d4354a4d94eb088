import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.constants import c, h

from cvqkd_coexist import channel as ch
from cvqkd_coexist.errors import MissingCoefficient

FIVE_NM = dict(nearest_nm=1555.0, direction=+1)


def plan(total_dbm=0.0, n=15, **kw):
    args = {**FIVE_NM, **kw}
    return ch.make_plan(args["nearest_nm"], args["direction"], total_dbm, n_channels=n)


def test_standard_plans_span_and_power():
    for nearest, direction, lo, hi in [(1555, 1, 1555, 1561), (1551, 1, 1551, 1557), (1549, -1, 1543, 1549)]:
        p = ch.make_plan(nearest, direction, 8.46)
        wl = [x.center_wavelength for x in p.channels]
        assert len(wl) == 15
        assert lo - 0.01 <= min(wl) and max(wl) <= hi + 0.01
        gaps = np.diff(sorted(ch.nm_to_hz(w) for w in wl))
        np.testing.assert_allclose(gaps, 50e9, rtol=1e-9)
        for x in p.channels:
            assert x.power == pytest.approx(8.46 - 10 * np.log10(15))
        assert p.total_power_dbm == pytest.approx(8.46)
        p.check_clear_of(1550.0, 300e6)


def test_overlap_with_quantum_band_rejected():
    p = ch.make_plan(1550.1, +1, 0.0)
    with pytest.raises(ValueError):
        p.check_clear_of(1550.0, 300e6)


def test_transmittance_values():
    assert ch.link_transmittance(ch.LinkSpec()) == 1.0
    assert ch.link_transmittance(ch.LinkSpec(fso_loss=3.85)) == pytest.approx(0.4121, abs=1e-4)
    assert ch.link_transmittance(ch.LinkSpec(12.8, 0.2)) == pytest.approx(0.5546, abs=1e-4)


@given(st.floats(0, 50), st.floats(0, 10), st.floats(0, 50), st.floats(0, 5))
def test_transmittance_multiplicative(l1, f1, l2, f2):
    a, b = ch.LinkSpec(l1, 0.2, f1), ch.LinkSpec(l2, 0.2, f2)
    both = ch.LinkSpec(l1 + l2, 0.2, f1 + f2)
    assert ch.link_transmittance(both) == pytest.approx(
        ch.link_transmittance(a) * ch.link_transmittance(b), rel=1e-12)


def test_negative_loss_rejected():
    with pytest.raises(ValueError):
        ch.LinkSpec(fiber_length=-1)


def test_bpf_points():
    f = ch.BpfSpec(insertion_loss=1.5)
    assert ch.bpf_transfer(f, 0.0) == pytest.approx(10 ** (-1.5 / 20), rel=1e-12)
    g = ch.BpfSpec()
    assert ch.bpf_transfer(g, g.bw_hz / 2) ** 2 == pytest.approx(0.5, abs=1e-6)
    assert ch.bpf_transfer(g, g.bw_hz) ** 2 == pytest.approx(2.0 ** -16, rel=1e-9)


@given(st.floats(1.0, 10.0), st.floats(0.1, 10.0), st.floats(0.0, 3.0))
def test_bpf_3db_all_orders(order, bw, il):
    f = ch.BpfSpec(bw_3db=bw, order=order, insertion_loss=il)
    center = ch.bpf_transfer(f, 0.0) ** 2
    for edge in (f.bw_hz / 2, -f.bw_hz / 2):
        assert ch.bpf_transfer(f, edge) ** 2 / center == pytest.approx(0.5, abs=1e-6)


def test_ase_zero_power_and_rectangle():
    ase = ch.AseModel(1e-18, 0.0, 0.0)
    empty = ch.WdmPlan(())
    assert ch.ase_inband_power(ase, empty, None, 1550.0, 300e6) == 0.0
    p = ch.ase_inband_power(ase, plan(0.0), None, 1550.0, 300e6)
    assert p == pytest.approx(3e-10, rel=1e-9)


def test_ase_linear_in_launch_power():
    ase = ch.AseModel(1e-22, 20.0, 0.0)
    bpf = ch.BpfSpec()
    for kw in (FIVE_NM, dict(nearest_nm=1551.0, direction=+1)):
        p1 = ch.ase_inband_power(ase, plan(0.0, **kw), bpf, 1550.0, 300e6)
        p2 = ch.ase_inband_power(ase, plan(10 * np.log10(2), **kw), bpf, 1550.0, 300e6)
        assert p2 == pytest.approx(2 * p1, rel=1e-9)


def test_ase_closer_channels_leak_more_through_filter():
    ase = ch.AseModel(1e-22, 30.0, 0.0)
    bpf = ch.BpfSpec()
    window = ch.bandwidth_nm_to_hz(8.0, 1550.0)
    far = ch.ase_inband_power(ase, plan(8.46), bpf, 1550.0, window)
    near = ch.ase_inband_power(ase, plan(8.46, nearest_nm=1551.0), bpf, 1550.0, window)
    assert near > far > 0


def test_noise_to_excess_closed_form():
    hnu = h * c / 1550e-9
    assert hnu == pytest.approx(1.281e-19, rel=1e-3)
    assert ch.noise_to_excess(0.0, 1550.0, 250e6) == 0.0
    xi = ch.noise_to_excess(1.6e-14, 1550.0, 250e6)
    assert xi == pytest.approx(2 * 1.6e-14 / (hnu * 250e6), rel=1e-12)
    assert xi == pytest.approx(1.0e-3, abs=5e-5)  # two significant figures
    assert ch.noise_to_excess(3.2e-14, 1550.0, 250e6) == pytest.approx(
        2 * ch.noise_to_excess(1.6e-14, 1550.0, 250e6), rel=1e-12)


def test_raman_cases():
    table = ch.default_raman_table()
    fiber = ch.LinkSpec(12.8, 0.2)
    assert ch.raman_power(plan(8.46), ch.LinkSpec(fso_loss=3.85), 1550.0, table) == 0.0
    zero = ch.RamanTable(np.array([-20.0, 20.0]), np.zeros(2))
    assert ch.raman_power(plan(0.0, n=1), fiber, 1550.0, zero) == 0.0
    one = ch.raman_power(ch.make_plan(1555.0, 1, 0.0, n_channels=1), fiber, 1550.0, table)
    same = ch.WdmPlan(tuple(ch.make_plan(1555.0, 1, 0.0, n_channels=1).channels * 15))
    assert ch.raman_power(same, fiber, 1550.0, table) == pytest.approx(15 * one, rel=1e-12)


def test_raman_table_gap_and_file(tmp_path):
    f = tmp_path / "rho.txt"
    f.write_text("# offset rho\n5.0 2e-9\n-5.0 1e-9\n")
    t = ch.RamanTable.load(f)
    assert t(0.0)[0] == pytest.approx(1.5e-9)
    with pytest.raises(MissingCoefficient):
        t(6.0)


def test_propagate_identity_and_power():
    x = np.random.default_rng(0).standard_normal(1000) + 0j
    np.testing.assert_array_equal(ch.propagate(x, 1.0, ch.LaserSpec(), 0.0, 1), x)
    n = 1_000_000
    x = np.random.default_rng(1).standard_normal(n) + 1j * np.random.default_rng(2).standard_normal(n)
    y = ch.propagate(x, 0.4, ch.LaserSpec(2e5, 3e6), 0.0, 3)
    p_in = np.abs(x) ** 2
    assert abs(np.mean(np.abs(y) ** 2) - 0.4 * p_in.mean()) < 3 * 0.4 * p_in.std() / np.sqrt(n)


def test_propagate_added_noise_variance():
    n = 400_000
    y = ch.propagate(np.zeros(n), 1.0, ch.LaserSpec(), 0.01 / 2e9, 5, sample_rate=2e9)
    assert np.var(y.real) == pytest.approx(0.01, rel=0.02)


def test_wiener_increments():
    n = 1_000_000
    phi = ch.wiener_phase(n, 200e3, 2e9, np.random.default_rng(4))
    expect = 2 * np.pi * 200e3 / 2e9
    assert np.var(np.diff(phi)) == pytest.approx(expect, rel=0.05)
    with pytest.raises(ValueError):
        ch.LaserSpec(combined_linewidth=-1.0)
