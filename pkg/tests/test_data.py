import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from ssencoder import (
    Dataset,
    Normalizer,
    duffing_system,
    fit_normalizer,
    generate,
    linear_system,
    load_csv,
    save_csv,
    split,
    wiener_system,
)


def write(path, text):
    path.write_text(text)
    return str(path)


class TestLoadCsv:
    def test_basic_parse(self, tmp_path):
        p = write(tmp_path / "d.csv", "u1,y1\n1,4\n2,5\n3,6\n")
        d = load_csv(p, 1, 1)
        assert d.n_samples == 3 and d.n_u == 1 and d.n_y == 1
        assert_array_equal(d.u.ravel(), [1, 2, 3])
        assert_array_equal(d.y.ravel(), [4, 5, 6])

    def test_multichannel_header(self, tmp_path):
        p = write(tmp_path / "d.csv", "u1,u2,y1\n1,2,3\n")
        d = load_csv(p, 2, 1)
        assert d.n_u == 2 and d.n_samples == 1

    def test_header_mismatch(self, tmp_path):
        p = write(tmp_path / "d.csv", "u1,z1\n1,2\n")
        with pytest.raises(ValueError, match="header mismatch"):
            load_csv(p, 1, 1)

    def test_missing_output_column(self, tmp_path):
        p = write(tmp_path / "d.csv", "u1\n1\n")
        with pytest.raises(ValueError, match="header mismatch"):
            load_csv(p, 1, 1)

    def test_non_numeric_names_row(self, tmp_path):
        p = write(tmp_path / "d.csv", "u1,y1\n1,2\nabc,3\n")
        with pytest.raises(ValueError, match="row 3"):
            load_csv(p, 1, 1)

    def test_missing_field_names_row(self, tmp_path):
        p = write(tmp_path / "d.csv", "u1,y1\n1,2\n3\n")
        with pytest.raises(ValueError, match="row 3"):
            load_csv(p, 1, 1)

    def test_zero_rows(self, tmp_path):
        p = write(tmp_path / "d.csv", "u1,y1\n")
        with pytest.raises(ValueError, match="no data rows"):
            load_csv(p, 1, 1)

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_csv(str(tmp_path / "absent.csv"), 1, 1)

    def test_nan_rejected(self, tmp_path):
        p = write(tmp_path / "d.csv", "u1,y1\n1,nan\n")
        with pytest.raises(ValueError, match="row 2"):
            load_csv(p, 1, 1)

    def test_crlf_accepted(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_bytes(b"u1,y1\r\n1,2\r\n3,4\r\n")
        d = load_csv(str(p), 1, 1)
        assert d.n_samples == 2

    def test_round_trip_exact(self, tmp_path, rng):
        d = Dataset(u=rng.standard_normal((50, 2)), y=rng.standard_normal((50, 1)))
        p = tmp_path / "rt.csv"
        save_csv(d, p)
        d2 = load_csv(str(p), 2, 1)
        assert_array_equal(d.u, d2.u)
        assert_array_equal(d.y, d2.y)


class TestNormalizer:
    def test_population_std(self):
        d = Dataset(u=[1.0, 2.0, 3.0], y=[2.0, 4.0, 6.0])
        un, yn = fit_normalizer(d)
        assert un.mean[0] == 2.0
        assert_allclose(un.std[0], np.sqrt(2.0 / 3.0))
        assert yn.mean[0] == 4.0

    def test_constant_channel_rejected(self):
        d = Dataset(u=[5.0, 5.0, 5.0], y=[1.0, 2.0, 3.0])
        with pytest.raises(ValueError, match="constant u channel"):
            fit_normalizer(d)

    def test_apply_invert_round_trip(self, rng):
        x = rng.standard_normal((100, 3)) * 7 + 2
        n = Normalizer(x.mean(axis=0), x.std(axis=0))
        assert_allclose(n.invert(n.apply(x)), x, rtol=1e-14, atol=1e-14)

    def test_normalized_moments(self, rng):
        d = Dataset(u=rng.standard_normal((500, 2)) * 3 + 1,
                    y=rng.standard_normal((500, 1)) * 0.244)
        un, yn = fit_normalizer(d)
        for norm, arr in ((un, d.u), (yn, d.y)):
            z = norm.apply(arr)
            assert np.abs(z.mean(axis=0)).max() < 1e-10
            assert np.abs(z.std(axis=0) - 1).max() < 1e-10

    def test_zero_std_rejected_on_construction(self):
        with pytest.raises(ValueError, match="strictly positive"):
            Normalizer([0.0], [0.0])


class TestSplit:
    def test_basic(self, rng):
        d = Dataset(u=rng.standard_normal(100), y=rng.standard_normal(100))
        a, b = split(d, [(0, 80), (80, 100)])
        assert a.n_samples == 80 and b.n_samples == 20
        assert_array_equal(a.u, d.u[:80])
        assert_array_equal(b.y, d.y[80:])

    def test_overlap_rejected(self, rng):
        d = Dataset(u=rng.standard_normal(100), y=rng.standard_normal(100))
        with pytest.raises(ValueError, match="overlaps"):
            split(d, [(0, 80), (70, 100)])

    def test_out_of_bounds(self, rng):
        d = Dataset(u=rng.standard_normal(100), y=rng.standard_normal(100))
        with pytest.raises(ValueError, match="out of bounds"):
            split(d, [(0, 101)])

    def test_metadata_propagated(self, rng):
        d = Dataset(u=rng.standard_normal(10), y=rng.standard_normal(10),
                    sample_period=0.25)
        (a,) = split(d, [(2, 8)])
        assert a.sample_period == 0.25


class TestGenerate:
    def test_pure_feedthrough(self):
        sys_ = linear_system(A=[[0.0]], B=[[0.0]], C=[[0.0]], D=[[1.0]])
        d = generate(sys_, [1.0, 2.0], seed=0)
        assert_array_equal(d.y.ravel(), [1.0, 2.0])

    def test_scalar_recursion(self):
        # x+ = 0.5x + u, y = x, u = [1,0,0] -> y = [0, 1, 0.5]
        sys_ = linear_system(A=[[0.5]], B=[[1.0]], C=[[1.0]], D=[[0.0]])
        d = generate(sys_, [1.0, 0.0, 0.0], seed=0)
        assert_allclose(d.y.ravel(), [0.0, 1.0, 0.5], rtol=0, atol=0)

    def test_unstable_rejected(self):
        sys_ = linear_system(A=[[1.01]], B=[[1.0]], C=[[1.0]], D=[[0.0]])
        with pytest.raises(ValueError, match="spectral radius"):
            generate(sys_, [1.0, 2.0], seed=0)

    def test_non_finite_input_rejected(self):
        sys_ = linear_system(A=[[0.5]], B=[[1.0]], C=[[1.0]], D=[[0.0]])
        with pytest.raises(ValueError, match="NaN or Inf"):
            generate(sys_, [1.0, np.inf], seed=0)

    def test_deterministic_with_noise(self, rng):
        sys_ = duffing_system(noise_std=0.05)
        u = rng.standard_normal(200)
        d1 = generate(sys_, u, seed=9)
        d2 = generate(sys_, u, seed=9)
        assert_array_equal(d1.y, d2.y)
        d3 = generate(sys_, u, seed=10)
        assert not np.array_equal(d1.y, d3.y)

    def test_noiseless_duffing_deterministic(self, rng):
        sys_ = duffing_system()
        u = rng.standard_normal(100)
        assert_array_equal(generate(sys_, u, seed=1).y, generate(sys_, u, seed=2).y)

    def test_wiener_matches_naive_loop(self, rng):
        A = np.array([[0.6, 0.2], [-0.2, 0.5]])
        B = np.array([[1.0], [0.3]])
        C = np.array([[0.8, -0.4]])
        D = np.array([[0.1]])
        sys_ = wiener_system(A, B, C, D, nonlinearity="tanh")
        u = rng.standard_normal((150, 1))
        d = generate(sys_, u, seed=0)
        # independent plain-loop filter followed by the static nonlinearity
        x = np.zeros(2)
        expected = np.empty(150)
        for t in range(150):
            expected[t] = np.tanh(C @ x + D @ u[t]).item()
            x = A @ x + B @ u[t]
        assert_allclose(d.y.ravel(), expected, rtol=0, atol=1e-12)

    def test_duffing_against_adaptive_integrator(self):
        from scipy.integrate import solve_ivp

        sys_ = duffing_system(alpha=1.0, beta=5.0, delta=0.4, gamma=1.0,
                              dt=0.05, substeps=4)
        rng = np.random.default_rng(4)
        u = rng.standard_normal((80, 1))
        d = generate(sys_, u, seed=0)

        # reference: per-interval adaptive integration of the held-input ODE
        state = np.zeros(2)
        ref = np.empty(80)
        for t in range(80):
            ref[t] = state[0]
            def f(_, s, force=u[t, 0]):
                return [s[1], force - 0.4 * s[1] - s[0] - 5.0 * s[0] ** 3]
            sol = solve_ivp(f, (0.0, 0.05), state, rtol=1e-11, atol=1e-12)
            state = sol.y[:, -1]
        assert_allclose(d.y.ravel(), ref, atol=1e-7)

    def test_sample_period_from_duffing_dt(self, rng):
        d = generate(duffing_system(dt=0.125), rng.standard_normal(20), seed=0)
        assert d.sample_period == 0.125


class TestDatasetInvariants:
    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="sample counts differ"):
            Dataset(u=[1.0, 2.0], y=[1.0])

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError, match="NaN or Inf"):
            Dataset(u=[1.0, np.nan], y=[1.0, 2.0])
