"""Std maps, threshold zeroing, sigmoid weighting, background suppression."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from radarcount.core import Dataset
from radarcount.preprocess import (
    DEFAULT_STEEPNESS,
    DEFAULT_TAU,
    SigmoidParams,
    StdMap,
    apply_method,
    apply_weight,
    fit_background,
    sigmoid_weight,
    sigmoid_weight_map,
    std_map,
    suppress_background,
    threshold_zero,
)

from conftest import make_cube


class TestStdMap:
    def test_matches_direct_computation(self, rng):
        a = rng.normal(0.5, 0.2, size=(40, 5, 7))
        cube = make_cube(a)
        expected = np.asarray(cube.amplitudes, dtype=np.float64).std(
            axis=0, ddof=0)
        np.testing.assert_allclose(std_map(cube).values, expected, rtol=0,
                                   atol=0)

    def test_constant_cube_is_zero(self):
        assert np.all(std_map(make_cube(np.full((5, 3, 3), 2.0))).values == 0)

    def test_rejects_negative_values(self):
        with pytest.raises(ValueError, match="non-negative"):
            StdMap(values=np.array([[-1.0]]))


class TestThresholdZero:
    def test_zeroes_exactly_sigma_le_tau(self, rng):
        a = rng.normal(0.5, 0.05, size=(60, 8, 10))
        cube = make_cube(a)
        sm = np.asarray(cube.amplitudes, dtype=np.float64).std(axis=0, ddof=0)
        tau = float(np.median(sm))  # guarantees cells on both sides
        out = threshold_zero(cube, tau)
        zeroed = np.all(out.amplitudes == 0.0, axis=0)
        np.testing.assert_array_equal(zeroed, sm <= tau)
        kept = ~zeroed
        np.testing.assert_array_equal(out.amplitudes[:, kept],
                                      cube.amplitudes[:, kept])

    def test_equality_cell_is_zeroed(self):
        # one cell with an exactly computable std: values {0, 2} -> std 1
        a = np.zeros((4, 1, 2))
        a[:, 0, 0] = [0.0, 2.0, 0.0, 2.0]
        a[:, 0, 1] = [0.0, 4.0, 0.0, 4.0]
        out = threshold_zero(make_cube(a), tau=1.0)
        assert np.all(out.amplitudes[:, 0, 0] == 0.0)   # sigma == tau
        assert np.any(out.amplitudes[:, 0, 1] != 0.0)   # sigma > tau

    def test_negative_tau_rejected(self, small_cube):
        with pytest.raises(ValueError, match="non-negative"):
            threshold_zero(small_cube, -0.1)


class TestSigmoidWeight:
    def test_half_weight_at_tau(self):
        sm = StdMap(values=np.full((3, 3), DEFAULT_TAU))
        w = sigmoid_weight_map(sm).values
        assert np.all(np.abs(w - 0.5) < 1e-12)

    def test_matches_closed_form(self, rng):
        sigma = np.abs(rng.normal(0.02, 0.015, size=(6, 8)))
        w = sigmoid_weight_map(StdMap(values=sigma)).values
        expected = 1.0 / (1.0 + np.exp(-(sigma - DEFAULT_TAU)
                                       / DEFAULT_STEEPNESS))
        np.testing.assert_allclose(w, expected, atol=1e-12)

    def test_monotone_in_sigma(self):
        sigma = np.linspace(0, 0.1, 200)[None, :]
        w = sigmoid_weight_map(StdMap(values=sigma)).values.ravel()
        assert np.all(np.diff(w) > 0)

    def test_overflow_safe(self):
        sm = StdMap(values=np.array([[0.0, 10.0]]))
        w = sigmoid_weight_map(sm, SigmoidParams(tau=0.02, s=1e-6)).values
        assert np.isfinite(w).all()
        assert w[0, 0] == pytest.approx(0.0, abs=1e-12)
        assert w[0, 1] == pytest.approx(1.0, abs=1e-12)

    def test_steep_limit_agrees_with_threshold_mask(self, rng):
        a = rng.normal(0.5, 0.05, size=(60, 8, 10))
        cube = make_cube(a)
        sm = std_map(cube).values
        tau = float(np.median(sm))
        w = sigmoid_weight_map(StdMap(values=sm),
                               SigmoidParams(tau=tau, s=1e-6)).values
        mask = (sm > tau).astype(float)
        away = np.abs(sm - tau) > 1e-3
        np.testing.assert_allclose(w[away], mask[away], atol=1e-9)

    def test_apply_weight_scales_every_frame(self, small_cube):
        w = sigmoid_weight_map(std_map(small_cube))
        out = apply_weight(small_cube, w)
        expected = np.asarray(small_cube.amplitudes,
                              dtype=np.float64) * w.values[None]
        np.testing.assert_allclose(out.amplitudes, expected, rtol=1e-6)

    def test_apply_weight_shape_check(self, small_cube):
        from radarcount.preprocess import WeightMap
        with pytest.raises(ValueError, match="shape"):
            apply_weight(small_cube, WeightMap(values=np.ones((2, 2))))

    def test_nonpositive_steepness_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            SigmoidParams(s=0.0)

    @settings(max_examples=20, deadline=None)
    @given(arrays(np.float64, (5, 2, 3),
                  elements=st.floats(0.0, 10.0, allow_nan=False)))
    def test_weights_bounded(self, a):
        cube = make_cube(a)
        w = sigmoid_weight_map(std_map(cube)).values
        assert np.all((w >= 0.0) & (w <= 1.0))
        out = sigmoid_weight(cube)
        assert np.all(np.abs(out.amplitudes)
                      <= np.abs(np.asarray(cube.amplitudes,
                                           dtype=np.float64)) + 1e-12)


class TestBackgroundSuppress:
    def _background_dataset(self, rng, n=6):
        base = rng.uniform(0.3, 0.8, size=(4, 6))
        cubes = []
        for _ in range(n):
            a = base[None] + rng.normal(0, 0.01, size=(20, 4, 6))
            cubes.append(make_cube(np.abs(a), label=0))
        return cubes, base

    def test_basis_is_orthonormal(self, rng):
        cubes, _ = self._background_dataset(rng)
        m = fit_background(Dataset(cubes=cubes), rank=3)
        flat = m.basis.reshape(3, -1)
        np.testing.assert_allclose(flat @ flat.T, np.eye(3), atol=1e-8)

    def test_deterministic(self, rng):
        cubes, _ = self._background_dataset(rng)
        m1 = fit_background(Dataset(cubes=cubes), rank=2, seed=5)
        m2 = fit_background(Dataset(cubes=cubes), rank=2, seed=5)
        np.testing.assert_array_equal(m1.basis, m2.basis)

    def test_suppresses_background_more_than_target(self, rng):
        cubes, base = self._background_dataset(rng)
        m = fit_background(Dataset(cubes=cubes), rank=2)
        bg = cubes[0]
        target = np.asarray(bg.amplitudes, dtype=np.float64).copy()
        target[:, 2, 3] += 0.5  # a bright foreground cell
        tgt_cube = make_cube(target)
        out = suppress_background(tgt_cube, m, renormalize=False)
        resid = out.amplitudes
        assert resid[:, 2, 3].mean() > 5 * np.delete(
            resid.reshape(resid.shape[0], -1), 2 * 6 + 3, axis=1).mean()

    def test_requires_zero_person_cubes(self, rng):
        cubes, _ = self._background_dataset(rng)
        bad = make_cube(cubes[0].amplitudes, label=1)
        with pytest.raises(ValueError, match="0-person"):
            fit_background(Dataset(cubes=[bad]))

    def test_shape_mismatch(self, rng):
        cubes, _ = self._background_dataset(rng)
        m = fit_background(Dataset(cubes=cubes), rank=2)
        other = make_cube(np.ones((5, 3, 3)))
        with pytest.raises(ValueError, match="shape"):
            suppress_background(other, m)


class TestApplyMethod:
    def test_none_is_identity(self, small_cube):
        assert apply_method(small_cube, "none") is small_cube

    def test_unknown_method(self, small_cube):
        with pytest.raises(ValueError, match="unknown"):
            apply_method(small_cube, "sharpen")

    def test_background_requires_model(self, small_cube):
        with pytest.raises(ValueError, match="fitted model"):
            apply_method(small_cube, "background_suppress")

    def test_every_method_preserves_shape(self, small_cube, rng):
        bg = Dataset(cubes=[make_cube(
            np.abs(rng.normal(0.5, 0.01, size=(60, 12, 91))), label=0)
            for _ in range(2)])
        model = fit_background(bg, rank=2)
        for method in ("none", "threshold_zero", "sigmoid_weight",
                       "butterworth_bandpass", "two_stage_highpass",
                       "background_suppress"):
            out = apply_method(small_cube, method, background=model)
            assert out.amplitudes.shape == small_cube.amplitudes.shape
