"""Elliptic integrals and closed-form CPW oracle."""

import math

import mpmath
import pytest
import scipy.special

from cqedkit.analytic import (AnalyticError, cpw_caps, ellipe, ellipk,
                              quarter_wave_freq)
from cqedkit.constants import SPEED_OF_LIGHT, VACUUM_PERMITTIVITY


class TestEllipk:
    def test_k_zero(self):
        assert ellipk(0.0) == pytest.approx(math.pi / 2, rel=1e-15)

    def test_k_half(self):
        assert ellipk(0.5) == pytest.approx(1.6857503548, abs=1e-9)

    def test_near_unity_stays_finite(self):
        val = ellipk(0.9999)
        assert math.isfinite(val)
        assert val > 5.0

    def test_modulus_domain(self):
        with pytest.raises(AnalyticError):
            ellipk(1.0)
        with pytest.raises(AnalyticError):
            ellipk(-0.1)

    def test_against_scipy(self):
        # scipy uses the parameter convention m = k^2: independent oracle.
        for k in [0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99, 0.9999]:
            assert ellipk(k) == pytest.approx(scipy.special.ellipk(k * k),
                                              rel=1e-12)
            assert ellipe(k) == pytest.approx(scipy.special.ellipe(k * k),
                                              rel=1e-12)

    def test_monotone_and_bounded_below(self):
        ks = [0.0, 0.05, 0.2, 0.5, 0.8, 0.95, 0.999]
        vals = [ellipk(k) for k in ks]
        assert all(b > a for a, b in zip(vals, vals[1:]))
        assert vals[0] == pytest.approx(math.pi / 2, rel=1e-15)
        assert all(v >= math.pi / 2 for v in vals)

    def test_legendre_relation(self):
        for k in (0.1, 0.5, 0.9):
            kp = math.sqrt(1 - k * k)
            lhs = (ellipk(k) * ellipe(kp) + ellipe(k) * ellipk(kp)
                   - ellipk(k) * ellipk(kp))
            assert abs(lhs - math.pi / 2) <= 1e-12


class TestCpwCaps:
    def test_paper_material_point(self):
        cpw = cpw_caps(10e-6, 6e-6, 11.49)
        assert cpw.modulus == pytest.approx(0.45455, abs=1e-5)
        assert cpw.eps_eff == pytest.approx(6.245, abs=1e-12)
        assert cpw.phase_velocity == pytest.approx(
            SPEED_OF_LIGHT / math.sqrt(6.245), rel=1e-15)

    def test_monotone_decrease_with_gap(self):
        caps = [cpw_caps(10e-6, s, 11.49).cap_per_len
                for s in (2e-6, 6e-6, 20e-6, 100e-6)]
        assert all(b < a for a, b in zip(caps, caps[1:]))

    def test_conformal_scale_invariance(self):
        base = cpw_caps(10e-6, 6e-6, 11.49).cap_per_len
        assert cpw_caps(20e-6, 12e-6, 11.49).cap_per_len == base
        assert cpw_caps(35e-6, 21e-6, 11.49).cap_per_len == pytest.approx(
            base, rel=1e-12)

    def test_scales_with_vacuum_permittivity(self):
        cpw = cpw_caps(10e-6, 6e-6, 11.49)
        kp = math.sqrt(1 - cpw.modulus**2)
        ratio = cpw.cap_per_len / VACUUM_PERMITTIVITY
        assert ratio == pytest.approx(
            4.0 * cpw.eps_eff * ellipk(cpw.modulus) / ellipk(kp), rel=1e-15)

    def test_domain(self):
        with pytest.raises(AnalyticError):
            cpw_caps(0.0, 6e-6, 11.49)
        with pytest.raises(AnalyticError):
            cpw_caps(10e-6, 6e-6, 0.5)


class TestQuarterWave:
    def test_four_millimeter_example(self):
        got = quarter_wave_freq(4e-3, 6.245)
        # Independent high-precision evaluation.
        with mpmath.workdps(40):
            want = float(mpmath.mpf(SPEED_OF_LIGHT)
                         / (4 * mpmath.mpf("0.004") * mpmath.sqrt(mpmath.mpf("6.245"))))
        assert got == pytest.approx(want, rel=1e-4 * 1e-2)
        assert got == pytest.approx(7.498e9, rel=2e-4)

    def test_length_halving(self):
        assert quarter_wave_freq(8e-3, 6.245) == quarter_wave_freq(4e-3, 6.245) / 2

    def test_unit_case(self):
        assert quarter_wave_freq(SPEED_OF_LIGHT / 4.0, 1.0) == pytest.approx(
            1.0, rel=1e-15)

    def test_domain(self):
        with pytest.raises(AnalyticError):
            quarter_wave_freq(-1.0, 6.245)
        with pytest.raises(AnalyticError):
            quarter_wave_freq(4e-3, 0.9)
