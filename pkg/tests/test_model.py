import math

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from dvfs_energy import model
from dvfs_energy.errors import DomainError, InvalidModelError, TraceFormatError
from dvfs_energy.model import (
    DvfsTable,
    EnergyModel,
    LinearVF,
    PiecewiseLinearVF,
    PowerModelParams,
    ThermalParams,
    TimeModelParams,
)

from oracles import brute_line, central_difference, energy_by_formula
from strategies import energy_models, make_model

THERMAL = ThermalParams(R0=0.1, V0=1.0, T0=310.0, B=1000.0)


# --- DVFS table -----------------------------------------------------------


def test_bundled_table_matches_galaxy_s2_values(table):
    assert len(table) == 15
    assert table.entries[0] == (0.2, 0.92)
    assert table.entries[-1] == (1.6, 1.35)
    assert table.voltage_for(1.0) == 1.125
    assert table.voltage_for(0.7) == 1.0


@pytest.mark.parametrize(
    "entries",
    [
        ((0.2, 1.0), (0.2, 1.1)),
        ((0.3, 1.0), (0.2, 1.1)),
        ((0.2, 1.1), (0.3, 1.0)),
        ((0.2, -1.0),),
        ((0.0, 1.0),),
    ],
)
def test_table_invariants_rejected(entries):
    with pytest.raises(InvalidModelError):
        DvfsTable(entries)


def test_load_table_ghz_volts(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("freq_ghz,voltage_v\n0.5,0.9\n1.0,1.0\n")
    assert model.load_dvfs_table(p).entries == ((0.5, 0.9), (1.0, 1.0))


def test_load_table_bad_row_names_line(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("freq_mhz,voltage_mv\n200,920\n300,abc\n")
    with pytest.raises(TraceFormatError, match="line 3"):
        model.load_dvfs_table(p)


# --- voltage map ----------------------------------------------------------


def test_voltage_at_constant_and_identity():
    assert model.voltage_at(LinearVF(0.0, 1.0), 1.3) == 1.0
    assert model.voltage_at(LinearVF(1.0, 0.0), 0.5) == 0.5


def test_fit_linear_vf_two_point_line():
    vf = model.fit_linear_vf(DvfsTable(((0.2, 0.92), (1.6, 1.35))))
    assert vf.m1 == pytest.approx(0.43 / 1.4, rel=1e-12)
    assert vf.m2 == pytest.approx(0.92 - 0.2 * 0.43 / 1.4, rel=1e-12)
    assert vf.m1 == pytest.approx(0.3071, abs=1e-4)
    assert vf.m2 == pytest.approx(0.8586, abs=1e-4)


def test_fit_linear_vf_constant_voltage():
    vf = model.fit_linear_vf(DvfsTable(((0.2, 1.1), (0.5, 1.1), (0.9, 1.1))))
    assert vf.m1 == 0.0
    assert vf.m2 == pytest.approx(1.1)


def test_fit_linear_vf_matches_brute_force_grid(table):
    vf = model.fit_linear_vf(table)
    m1, m2 = brute_line(table.frequencies, table.voltages)
    assert vf.m1 == pytest.approx(m1, abs=1e-6)
    assert vf.m2 == pytest.approx(m2, abs=1e-6)
    # Frozen from the grid oracle.
    assert vf.m1 == pytest.approx(0.33160714, abs=1e-6)
    assert vf.m2 == pytest.approx(0.80622024, abs=1e-6)


def test_fit_linear_vf_residuals_orthogonal(table):
    vf = model.fit_linear_vf(table)
    r = table.voltages - vf.voltage(table.frequencies)
    assert abs(r.sum()) < 1e-12
    assert abs(r @ table.frequencies) < 1e-12


def test_linear_vf_at_one_ghz_within_sanity_band(table):
    v = model.voltage_at(model.fit_linear_vf(table), 1.0)
    assert v == pytest.approx(1.1378, abs=1e-4)
    assert abs(v - 1.125) < 0.05


def test_fit_linear_vf_needs_two_entries():
    with pytest.raises(InvalidModelError):
        model.fit_linear_vf(DvfsTable(((0.5, 1.0),)))


def test_piecewise_vf_hits_table_points(table):
    vf = PiecewiseLinearVF(table)
    np.testing.assert_allclose(vf.voltage(table.frequencies), table.voltages)
    assert vf.slope(0.45) == pytest.approx(0.0)
    assert vf.slope(1.55) == pytest.approx(0.25)


# --- execution time -------------------------------------------------------


def test_exec_time_examples():
    p = TimeModelParams(1.0, 0.0, 1.0)
    assert model.exec_time(p, 1.0) == 1.0
    assert model.exec_time(p, 2.0) == 0.5


def test_exec_time_below_asymptote_is_domain_error():
    p = TimeModelParams(1.0, 0.115, 1.0)
    with pytest.raises(DomainError):
        model.exec_time(p, 0.115)
    with pytest.raises(DomainError):
        model.exec_time(p, 0.05)


@pytest.mark.parametrize("kw", [dict(cc_b=0, cc_k=0, beta=1), dict(cc_b=1, cc_k=-1, beta=1), dict(cc_b=1, cc_k=0, beta=0)])
def test_time_params_invariants(kw):
    with pytest.raises(InvalidModelError):
        TimeModelParams(**kw)


@given(
    cc_b=st.floats(0.1, 10), asym=st.floats(0.01, 0.5), beta=st.floats(0.5, 2.5),
    f1=st.floats(1.001, 5), f2=st.floats(1.001, 5),
)
def test_exec_time_positive_and_decreasing(cc_b, asym, beta, f1, f2):
    p = TimeModelParams(cc_b, asym**beta, beta)
    a, b = sorted((f1 * asym, f2 * asym))
    ta, tb = model.exec_time(p, a), model.exec_time(p, b)
    assert ta > 0 and tb > 0
    if b > a * (1 + 1e-9):
        assert tb < ta


def test_exec_time_blows_up_at_asymptote():
    p = TimeModelParams(1.0, 0.115, 1.0)
    assert model.exec_time(p, 0.115 + 1e-9) > 1e8


# --- leakage --------------------------------------------------------------


def test_leakage_ratio_reference_identities():
    assert model.leakage_ratio(THERMAL, THERMAL.T0, THERMAL.V0) == pytest.approx(THERMAL.R0, rel=1e-15)
    assert model.leakage_ratio(THERMAL, THERMAL.T0, 2 * THERMAL.V0) == pytest.approx(2 * THERMAL.R0, rel=1e-15)


def test_leakage_ratio_direct_evaluation():
    # Frozen from a 40-digit mpmath evaluation of the closed form.
    r = model.leakage_ratio(THERMAL, 320.0, 1.0)
    assert r == pytest.approx(0.11785723678352310, rel=1e-13)
    assert r > 0.1


def test_gamma_at_reference():
    assert model.gamma_at(THERMAL, 310.0) == pytest.approx(0.1, rel=1e-15)
    t = ThermalParams(0.2, 1.25, 300.0, 900.0)
    assert model.gamma_at(t, 300.0) == pytest.approx(0.2 / 1.25, rel=1e-15)


# Below ~5 K exp(-B/T) underflows to zero in float64; stay in the physical range.
@given(st.floats(100.0, 600.0), st.floats(100.0, 600.0), st.floats(0.01, 2.0))
def test_gamma_at_is_leakage_over_v_and_increasing(t1, t2, v):
    assert model.gamma_at(THERMAL, t1) == pytest.approx(model.leakage_ratio(THERMAL, t1, v) / v, rel=1e-12)
    lo, hi = sorted((t1, t2))
    if hi > lo * (1 + 1e-9):
        assert model.gamma_at(THERMAL, hi) > model.gamma_at(THERMAL, lo)


def test_scale_gamma_anchored_at_reference():
    assert model.scale_gamma(0.3, THERMAL, 310.15, 310.15) == pytest.approx(0.3)
    assert model.scale_gamma(0.3, THERMAL, 330.0, 310.15) > 0.3


# --- power ----------------------------------------------------------------


def test_total_power_examples():
    assert model.total_power(PowerModelParams(0, 0, 1), 1, 1) == 1.0
    assert model.total_power(PowerModelParams(0.5, 0, 1), 1, 1) == 1.5
    assert model.total_power(PowerModelParams(0, 0.5, 2), 1.2, 1.25) == pytest.approx(6.09375, rel=1e-15)


def test_power_params_invariants():
    with pytest.raises(InvalidModelError):
        PowerModelParams(-0.1, 0.1, 1.0)
    with pytest.raises(InvalidModelError):
        PowerModelParams(0.1, 0.1, 0.0)


# --- energy ---------------------------------------------------------------


def test_flat_model_energy_constant(flat_model):
    f = np.linspace(0.2, 1.6, 57)
    np.testing.assert_allclose(model.cpu_energy(flat_model, f), 1.0, rtol=1e-14)


@pytest.mark.parametrize("gamma", [0.0, 0.3, 2.0])
def test_constant_voltage_energy_constant_for_any_gamma(gamma):
    m = make_model(cc_b=2.0, asym=0.0, beta=1.0, gamma=gamma, eta=0.7, m1=0.0, m2=1.1)
    e = model.cpu_energy(m, np.linspace(0.2, 1.6, 31))
    np.testing.assert_allclose(e, e[0], rtol=1e-13)


def test_energy_beta_two_hand_arithmetic():
    m = EnergyModel(TimeModelParams(1, 0, 2), PowerModelParams(0, 0, 1), LinearVF(0, 1), (0.2, 2.0))
    assert model.cpu_energy(m, 2.0) == pytest.approx(0.5)


def test_cpu_energy_is_power_minus_system_times_time(canonical):
    m = canonical.with_params(p_system=0.4)
    for f in (0.2, 0.7, 1.6):
        V = model.voltage_at(m.vf, f)
        expected = (model.total_power(m.power, f, V) - 0.4) * model.exec_time(m.time, f)
        assert model.cpu_energy(m, f) == pytest.approx(expected, rel=1e-13)
        assert model.system_energy(m, f) == pytest.approx(
            model.total_power(m.power, f, V) * model.exec_time(m.time, f), rel=1e-13
        )


def test_cpu_energy_outside_range_is_domain_error(canonical):
    with pytest.raises(DomainError):
        model.cpu_energy(canonical, 0.1)
    with pytest.raises(DomainError):
        model.cpu_energy(canonical, 1.7)


def test_model_rejects_asymptote_above_fmin():
    with pytest.raises(InvalidModelError):
        EnergyModel(TimeModelParams(1, 0.25, 1), PowerModelParams(0, 0, 1), LinearVF(0, 1), (0.2, 1.6))
    with pytest.raises(InvalidModelError):
        EnergyModel(TimeModelParams(1, 0.1, 1), PowerModelParams(0, 0, 1), LinearVF(0, 1), (1.6, 0.2))


def test_canonical_energy_matches_independent_formula(canonical):
    f = np.linspace(0.2, 1.6, 101)
    t, p, vf = canonical.time, canonical.power, canonical.vf
    expected = energy_by_formula(f, t.cc_b, t.cc_k, t.beta, p.gamma, p.eta_alpha_c, vf.m1, vf.m2)
    np.testing.assert_allclose(model.cpu_energy(canonical, f), expected, rtol=1e-13)


def test_canonical_derivative_signs(canonical):
    assert model.energy_derivative(canonical, 0.3) < 0
    assert model.energy_derivative(canonical, 1.5) > 0


def test_flat_model_derivative_and_residual_zero(flat_model):
    f = np.linspace(0.2, 1.6, 29)
    np.testing.assert_allclose(model.energy_derivative(flat_model, f), 0.0, atol=1e-14)
    np.testing.assert_allclose(model.optimality_residual(flat_model, f), 0.0, atol=1e-15)


@settings(max_examples=60, deadline=None)
@given(energy_models(), st.floats(0.0, 1.0))
def test_derivative_matches_central_difference(m, u):
    h = 1e-5
    f = m.f_min + h + u * (m.f_max - m.f_min - 2 * h)
    fd = central_difference(lambda x: model.cpu_energy(m, x), f, h)
    d = model.energy_derivative(m, f)
    assert d == pytest.approx(fd, rel=1e-6, abs=1e-9 * abs(model.cpu_energy(m, f)))


@settings(max_examples=60, deadline=None)
@given(energy_models(), st.lists(st.floats(0.0, 1.0), min_size=20, max_size=20))
def test_residual_sign_matches_derivative(m, us):
    f = m.f_min + np.array(us) * (m.f_max - m.f_min)
    d = model.energy_derivative(m, f)
    r = model.optimality_residual(m, f)
    # Where one side is within rounding of zero the sign is not meaningful.
    e = model.cpu_energy(m, f)
    clear = np.abs(d) > 1e-9 * e
    assert np.all(np.sign(d[clear]) == np.sign(r[clear]))


@settings(max_examples=40, deadline=None)
@given(energy_models(), st.floats(0.0, 1.0))
def test_residual_is_scaled_log_derivative(m, u):
    # d ln E / df = rhs_minus_lhs / (f V (1 + gamma V)); check the algebra directly.
    f = m.f_min + u * (m.f_max - m.f_min)
    V = model.voltage_at(m.vf, f)
    g = m.power.gamma
    rhs = f * m.vf.m1 * (3 * g * V + 2) + (1 + g * V) * V
    dlog = model.energy_derivative(m, f) / model.cpu_energy(m, f)
    assert model.optimality_residual(m, f) * rhs / (f * V * (1 + g * V)) == pytest.approx(dlog, rel=1e-9, abs=1e-12)


def test_model_mapping_round_trip(canonical):
    again = model.model_from_mapping(model.model_to_mapping(canonical))
    assert again == canonical


def test_with_params_rejects_unknown(canonical):
    with pytest.raises(KeyError):
        canonical.with_params(alpha=1.0)


def test_canonical_asymptote_is_115_mhz(canonical):
    assert canonical.time.asymptote == pytest.approx(0.115, rel=1e-12)
    assert math.isclose(canonical.f_min, 0.2) and math.isclose(canonical.f_max, 1.6)
