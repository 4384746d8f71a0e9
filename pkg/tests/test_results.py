"""Solver output table parsing."""

import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cqedkit.results import (MaxwellCapMatrix, ModeResult, ResultsError,
                             filter_modes, join_modes, load_modes,
                             maxwell_to_mutual, mutual_to_maxwell,
                             parse_cap_csv, parse_eig_csv, parse_epr_csv,
                             parse_sparams_csv)


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestCapMatrix:
    def test_two_by_two_femtofarad(self, tmp_path):
        path = write(tmp_path, "c.csv",
                     "terminal,pad_a (fF),pad_b (fF)\n"
                     "pad_a,100.0,-5.0\n"
                     "pad_b,-5.0,60.0\n")
        m = parse_cap_csv(path)
        assert m.terminal_names == ["pad_a", "pad_b"]
        np.testing.assert_allclose(m.matrix,
                                   np.array([[100.0, -5.0], [-5.0, 60.0]]) * 1e-15)

    def test_positive_off_diagonal_rejected(self, tmp_path):
        path = write(tmp_path, "c.csv",
                     "terminal,a (fF),b (fF)\na,100.0,5.0\nb,5.0,60.0\n")
        with pytest.raises(ResultsError, match="off-diagonal"):
            parse_cap_csv(path)

    def test_single_terminal(self, tmp_path):
        path = write(tmp_path, "c.csv", "terminal,a (fF)\na,55.0\n")
        m = parse_cap_csv(path)
        assert m.matrix.shape == (1, 1)
        assert m.matrix[0, 0] == 55e-15

    def test_asymmetry_beyond_tolerance(self, tmp_path):
        path = write(tmp_path, "c.csv",
                     "terminal,a (fF),b (fF)\na,100.0,-5.0\nb,-5.1,60.0\n")
        with pytest.raises(ResultsError, match="asymmetry"):
            parse_cap_csv(path)

    def test_small_asymmetry_symmetrized(self, tmp_path):
        path = write(tmp_path, "c.csv",
                     "terminal,a (fF),b (fF)\n"
                     "a,100.0,-5.00000002\nb,-5.0,60.0\n")
        m = parse_cap_csv(path)
        assert m.matrix[0, 1] == m.matrix[1, 0]

    def test_missing_unit_rejected(self, tmp_path):
        path = write(tmp_path, "c.csv", "terminal,a,b\na,100,-5\nb,-5,60\n")
        with pytest.raises(ResultsError, match="unit"):
            parse_cap_csv(path)

    def test_whitespace_and_blank_lines_tolerated(self, tmp_path):
        path = write(tmp_path, "c.csv",
                     "terminal , a (fF) , b (fF) \n\n"
                     "a, 100.0 , -5.0  \n"
                     "b, -5.0 , 60.0\n\n")
        m = parse_cap_csv(path)
        assert m.matrix[1, 1] == 60e-15


class TestMaxwellToMutual:
    def test_hand_computed(self):
        m = MaxwellCapMatrix(["a", "b"],
                             np.array([[100.0, -5.0], [-5.0, 60.0]]) * 1e-15)
        mutual, self_cap = maxwell_to_mutual(m)
        assert mutual[0, 1] == pytest.approx(5e-15)
        np.testing.assert_allclose(self_cap, [95e-15, 55e-15])

    def test_diagonal_matrix(self):
        m = MaxwellCapMatrix(["a", "b"], np.diag([50e-15, 70e-15]))
        mutual, self_cap = maxwell_to_mutual(m)
        assert np.all(mutual == 0)
        np.testing.assert_allclose(self_cap, [50e-15, 70e-15])

    def test_negative_self_capacitance(self):
        with pytest.raises(ResultsError):
            m = MaxwellCapMatrix(["a", "b"],
                                 np.array([[1.0, -2.0], [-2.0, 1.0]]) * 1e-15)
            maxwell_to_mutual(m)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 5), st.integers(0, 2**31 - 1))
    def test_bijection_exact_on_integer_grids(self, n, seed):
        rng = np.random.default_rng(seed)
        mutual = np.zeros((n, n))
        iu = np.triu_indices(n, 1)
        mutual[iu] = rng.integers(0, 20, size=len(iu[0])).astype(float)
        mutual += mutual.T
        self_cap = rng.integers(1, 200, size=n).astype(float)
        m = mutual_to_maxwell([f"t{i}" for i in range(n)], mutual, self_cap)
        mutual2, self2 = maxwell_to_mutual(m)
        np.testing.assert_array_equal(mutual2, mutual)
        np.testing.assert_array_equal(self2, self_cap)
        m2 = mutual_to_maxwell(m.terminal_names, mutual2, self2)
        np.testing.assert_array_equal(m2.matrix, m.matrix)


EIG = ("m,Re{f} (GHz),Im{f} (GHz),Q\n"
       "1,7.1933,0.00023977,15000.0\n"
       "2,21.5799,0.0021580,5000.0\n"
       "3,35.9665,0.0089916,2000.0\n")
EPR = ("m,p[J1]\n1,0.95\n2,0.2\n3,0.05\n")


class TestModes:
    def test_join_three(self, tmp_path):
        modes = load_modes(write(tmp_path, "eig.csv", EIG),
                           write(tmp_path, "epr.csv", EPR))
        assert len(modes) == 3
        assert modes[0].frequency == pytest.approx(7.1933e9)
        assert modes[0].participations["J1"] == 0.95
        assert modes[0].signs["J1"] == 1

    def test_missing_epr_gives_bare_modes(self, tmp_path):
        modes = load_modes(write(tmp_path, "eig.csv", EIG),
                           tmp_path / "absent.csv")
        assert all(m.participations == {} for m in modes)

    def test_participation_above_one_rejected(self, tmp_path):
        bad = "m,p[J1]\n1,1.2\n2,0.1\n3,0.1\n"
        with pytest.raises(ResultsError, match="outside"):
            load_modes(write(tmp_path, "eig.csv", EIG),
                       write(tmp_path, "epr.csv", bad))

    def test_index_mismatch_rejected(self, tmp_path):
        bad = "m,p[J1]\n1,0.5\n2,0.1\n9,0.1\n"
        with pytest.raises(ResultsError, match="missing|not"):
            load_modes(write(tmp_path, "eig.csv", EIG),
                       write(tmp_path, "epr.csv", bad))

    def test_q_from_imaginary_part(self, tmp_path):
        path = write(tmp_path, "eig.csv",
                     "m,Re{f} (GHz),Im{f} (GHz)\n1,8.0,0.0002\n")
        (row,) = parse_eig_csv(path)
        assert row[2] == pytest.approx(8.0 / (2 * 0.0002))

    def test_clamping_within_slack(self, tmp_path):
        epr = "m,p[J1]\n1,1.0000000005\n2,-0.0000000004\n3,0.5\n"
        modes = load_modes(write(tmp_path, "eig.csv", EIG),
                           write(tmp_path, "epr.csv", epr))
        assert modes[0].participations["J1"] == 1.0
        assert modes[1].participations["J1"] == 0.0

    def test_signs_read_when_present(self, tmp_path):
        epr = "m,p[J1],s[J1]\n1,0.9,-1\n2,0.1,1\n3,0.1,1\n"
        modes = load_modes(write(tmp_path, "eig.csv", EIG),
                           write(tmp_path, "epr.csv", epr))
        assert modes[0].signs["J1"] == -1


class TestFilterModes:
    def modes(self):
        return [ModeResult(index=i, frequency=f, q_factor=q)
                for i, (f, q) in enumerate([(5.1e9, 1e6), (7.19e9, 2e4),
                                            (7.29e9, 80.0), (12.0e9, 1e5)])]

    def test_window(self):
        kept = filter_modes(self.modes(), (7e9, 8e9))
        assert [m.frequency for m in kept] == [7.19e9, 7.29e9]

    def test_q_floor(self):
        kept = filter_modes(self.modes(), (7e9, 8e9), q_min=1000.0)
        assert [m.frequency for m in kept] == [7.19e9]

    def test_identity_full_window(self):
        modes = self.modes()
        assert filter_modes(modes, (0.0, math.inf), 0.0) == modes

    def test_empty_result_is_valid(self):
        assert filter_modes(self.modes(), (1e9, 2e9)) == []

    def test_idempotent(self):
        once = filter_modes(self.modes(), (7e9, 8e9), q_min=10.0)
        assert filter_modes(once, (7e9, 8e9), q_min=10.0) == once


class TestSParams:
    def test_db_deg_conversion(self, tmp_path):
        path = write(tmp_path, "s.csv",
                     "f (GHz),|S[2][1]| (dB),arg{S[2][1]} (deg.)\n"
                     "7.2,-0.5,-30.0\n7.3,-0.4,-31.0\n")
        sp = parse_sparams_csv(path)
        want = 10 ** (-0.5 / 20) * cmath.exp(-1j * math.pi / 6)
        assert sp.s(2, 1)[0] == pytest.approx(want, rel=1e-12)
        assert sp.frequencies[0] == pytest.approx(7.2e9)

    def test_re_im_equivalent(self, tmp_path):
        z = 10 ** (-0.5 / 20) * cmath.exp(-1j * math.pi / 6)
        a = parse_sparams_csv(write(
            tmp_path, "a.csv",
            "f (GHz),|S[2][1]| (dB),arg{S[2][1]} (deg.)\n"
            f"7.2,-0.5,-30.0\n7.3,-0.5,-30.0\n"))
        b = parse_sparams_csv(write(
            tmp_path, "b.csv",
            "f (GHz),Re{S[2][1]},Im{S[2][1]}\n"
            f"7.2,{z.real!r},{z.imag!r}\n7.3,{z.real!r},{z.imag!r}\n"))
        np.testing.assert_allclose(a.s(2, 1), b.s(2, 1), rtol=1e-12)
        np.testing.assert_allclose(a.frequencies, b.frequencies)

    def test_non_monotone_frequency_rejected(self, tmp_path):
        path = write(tmp_path, "s.csv",
                     "f (GHz),Re{S[2][1]},Im{S[2][1]}\n"
                     "7.3,0.5,0.0\n7.2,0.5,0.0\n")
        with pytest.raises(ResultsError, match="increasing"):
            parse_sparams_csv(path)

    def test_unknown_convention_rejected(self, tmp_path):
        path = write(tmp_path, "s.csv",
                     "f (GHz),weird\n7.2,1.0\n7.3,1.0\n")
        with pytest.raises(ResultsError, match="convention"):
            parse_sparams_csv(path)

    def test_passivity_flagging(self, tmp_path):
        path = write(tmp_path, "s.csv",
                     "f (GHz),Re{S[1][1]},Im{S[1][1]}\n"
                     "7.2,1.5,0.0\n7.3,0.5,0.0\n")
        with pytest.warns(UserWarning, match="non-passive"):
            sp = parse_sparams_csv(path)
        assert (1, 1) in sp.passivity_violations
