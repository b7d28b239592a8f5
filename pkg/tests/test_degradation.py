"""Blur-kernel synthesis and the blur/downsample/noise pipeline."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlcunet.config import DegradationSpec
from nlcunet.degradation import (blur_reflect, degrade, degrade_with_kernel,
                                 delta_kernel, gaussian_kernel_aniso,
                                 gaussian_kernel_iso, sample_kernel)
from nlcunet.degradation import test_kernel_grid as eval_kernel_grid
from nlcunet.ops import resize_array
from nlcunet.rng import CounterRng
from nlcunet.tensor import ShapeError, Tensor


class TestIsoKernel:
    def test_delta_limit(self):
        k = gaussian_kernel_iso(1e-4, 21)
        assert k.values[10, 10] > 1.0 - 1e-9

    @settings(max_examples=25, deadline=None)
    @given(st.floats(0.05, 6.0), st.sampled_from([5, 11, 21, 31]))
    def test_sum_one_and_symmetry(self, sigma, size):
        k = gaussian_kernel_iso(sigma, size).values
        assert abs(k.sum() - 1.0) < 1e-12
        assert np.all(k >= 0.0)
        # exact 8-fold dihedral symmetry
        assert np.array_equal(k, k.T)
        assert np.array_equal(k, k[::-1])
        assert np.array_equal(k, k[:, ::-1])
        assert np.array_equal(k, np.rot90(k))

    def test_closed_form_ratio(self):
        k = gaussian_kernel_iso(1.0, 5).values
        # center vs edge-center two cells away: exp(0)/exp(-2) = e^2
        ratio = k[2, 2] / k[2, 0]
        assert abs(ratio - np.exp(2.0)) < 1e-9

    def test_rejects_bad_sigma(self):
        with pytest.raises(ValueError, match="sigma"):
            gaussian_kernel_iso(0.0)
        with pytest.raises(ValueError, match="odd"):
            gaussian_kernel_iso(1.0, size=10)


class TestAnisoKernel:
    def test_degenerate_ellipse_equals_iso(self):
        for theta in (0.0, 0.7, -2.0):
            a = gaussian_kernel_aniso(1.3, 1.3, theta, 11).values
            b = gaussian_kernel_iso(1.3, 11).values
            assert np.max(np.abs(a - b)) < 1e-12

    def test_theta_period_pi(self):
        a = gaussian_kernel_aniso(1.0, 2.5, 0.4, 11).values
        b = gaussian_kernel_aniso(1.0, 2.5, 0.4 + np.pi, 11).values
        assert np.max(np.abs(a - b)) < 1e-12

    def test_sigma_swap_rotation_identity(self):
        a = gaussian_kernel_aniso(1.0, 2.0, np.pi / 2, 11).values
        b = gaussian_kernel_aniso(2.0, 1.0, 0.0, 11).values
        assert np.max(np.abs(a - b)) < 1e-12

    @settings(max_examples=25, deadline=None)
    @given(st.floats(0.6, 5.0), st.floats(0.6, 5.0), st.floats(-np.pi, np.pi))
    def test_normalized_nonnegative(self, s1, s2, theta):
        k = gaussian_kernel_aniso(s1, s2, theta, 11).values
        assert abs(k.sum() - 1.0) < 1e-12
        assert np.all(k >= 0.0)

    def test_rejects_nonpositive_width(self):
        with pytest.raises(ValueError, match="widths"):
            gaussian_kernel_aniso(-1.0, 2.0, 0.0)


class TestBlur:
    def test_separable_matches_direct_conv(self):
        rng = np.random.default_rng(0)
        img = rng.random((1, 2, 24, 24))
        kernel = gaussian_kernel_aniso(1.2, 2.4, 0.9, 11).values
        got = blur_reflect(img, kernel)
        # direct 2-D true convolution oracle
        pad = 5
        flipped = kernel[::-1, ::-1]
        xp = np.pad(img, ((0, 0), (0, 0), (pad, pad), (pad, pad)), mode="reflect")
        want = np.zeros_like(img)
        for i in range(11):
            for j in range(11):
                want += flipped[i, j] * xp[:, :, i:i + 24, j:j + 24]
        assert np.max(np.abs(got - want)) < 1e-10

    def test_constant_image_invariant(self):
        img = np.full((1, 3, 20, 20), 0.37)
        kernel = gaussian_kernel_iso(2.0, 21).values
        out = blur_reflect(img, kernel)
        assert np.max(np.abs(out - 0.37)) < 1e-12


class TestDegrade:
    def _hr(self, n=1, size=32, seed=1):
        rng = np.random.default_rng(seed)
        return rng.random((n, 3, size, size)).astype(np.float32)

    def test_identity_mode_is_exact_bicubic(self):
        hr = self._hr(2, 32)
        spec = DegradationSpec(mode="identity", scale=4, noise_sigma=0.0, seed=5)
        lr, kernels = degrade(hr, spec)
        want = resize_array(hr, 8, 8)
        assert np.array_equal(lr.data, want)
        assert kernels[0].params["type"] == "delta"

    def test_constant_image_any_kernel(self):
        hr = np.full((1, 3, 32, 32), 0.42, dtype=np.float32)
        spec = DegradationSpec(mode="config1", scale=4, seed=7)
        lr, _ = degrade(hr, spec)
        assert np.max(np.abs(lr.data - 0.42)) < 1e-6

    def test_config1_width_sampling_range(self):
        spec = DegradationSpec(mode="config1", scale=4, seed=11)
        rng = CounterRng(11, "probe")
        sigmas = [sample_kernel(spec, rng.spawn(i)).params["sigma"] for i in range(400)]
        assert all(0.2 <= s <= 4.0 for s in sigmas)
        assert min(sigmas) < 0.6 and max(sigmas) > 3.6  # actually spans the range

    @pytest.mark.parametrize("scale,lo,hi", [(2, 0.2, 2.0), (3, 0.2, 3.0)])
    def test_config1_other_scales(self, scale, lo, hi):
        spec = DegradationSpec(mode="config1", scale=scale, seed=3)
        rng = CounterRng(3, "probe")
        sigmas = [sample_kernel(spec, rng.spawn(i)).params["sigma"] for i in range(200)]
        assert all(lo <= s <= hi for s in sigmas)

    def test_config2_kernel_properties(self):
        spec = DegradationSpec(mode="config2", scale=4, seed=13)
        k = sample_kernel(spec, CounterRng(13))
        assert k.size == 31
        assert 0.6 <= k.params["sigma1"] <= 5.0
        assert 0.6 <= k.params["sigma2"] <= 5.0
        assert -np.pi <= k.params["theta"] <= np.pi
        spec2 = DegradationSpec(mode="config2", scale=2, seed=13)
        assert sample_kernel(spec2, CounterRng(14)).size == 11

    def test_config2_scale3_needs_explicit_size(self):
        from nlcunet.config import ConfigError
        spec = DegradationSpec(mode="config2", scale=3)
        with pytest.raises(ConfigError, match="kernel size"):
            spec.validate()
        ok = DegradationSpec(mode="config2", scale=3, kernel_size=21)
        ok.validate()
        assert sample_kernel(ok, CounterRng(0)).size == 21

    def test_variance_interpretation_flag(self):
        spec = DegradationSpec(mode="config2", scale=4, width_range=(0.175, 2.5),
                               range_is_variance=True)
        lo, hi = spec.resolved_width_range()
        assert abs(lo - 0.175 ** 0.5) < 1e-12 and abs(hi - 2.5 ** 0.5) < 1e-12
        spec_w = DegradationSpec(mode="config2", scale=4, width_range=(0.175, 2.5))
        assert spec_w.resolved_width_range() == (0.175, 2.5)

    def test_seeded_determinism(self):
        hr = self._hr(3, 32, seed=2)
        spec = DegradationSpec(mode="config1", scale=2, noise_sigma=5.0, seed=21)
        a, ka = degrade(hr, spec)
        b, kb = degrade(hr, spec)
        assert np.array_equal(a.data, b.data)
        assert all(x.params == y.params for x, y in zip(ka, kb))
        spec2 = DegradationSpec(mode="config1", scale=2, noise_sigma=5.0, seed=22)
        c, _ = degrade(hr, spec2)
        assert not np.array_equal(a.data, c.data)

    def test_per_item_kernels_differ(self):
        hr = self._hr(4, 16, seed=3)
        spec = DegradationSpec(mode="config1", scale=2, seed=31)
        _, kernels = degrade(hr, spec)
        sigmas = {k.params["sigma"] for k in kernels}
        assert len(sigmas) == 4

    def test_awgn_std(self):
        # mid-gray image so the clamp never bites; >= 1e6 samples
        hr = np.full((1, 3, 1200, 1200), 0.5, dtype=np.float32)
        spec = DegradationSpec(mode="identity", scale=2, noise_sigma=15.0, seed=41)
        lr, _ = degrade(hr, spec)
        resid = lr.data - 0.5
        assert resid.size >= 1_000_000
        measured = resid.std()
        assert abs(measured - 15.0 / 255.0) / (15.0 / 255.0) < 0.02

    def test_indivisible_dims_rejected(self):
        with pytest.raises(ShapeError, match="divisible"):
            degrade(self._hr(1, 30), DegradationSpec(mode="config1", scale=4))

    def test_values_in_range_after_noise(self):
        hr = self._hr(1, 32, seed=4)
        spec = DegradationSpec(mode="config1", scale=2, noise_sigma=25.0, seed=5)
        lr, _ = degrade(hr, spec)
        assert lr.data.min() >= 0.0 and lr.data.max() <= 1.0

    def test_accepts_tensor_input(self):
        hr = Tensor(self._hr(1, 16, seed=6))
        lr, _ = degrade(hr, DegradationSpec(mode="identity", scale=2))
        assert lr.shape == (1, 3, 8, 8)


class TestKernelGrid:
    def test_scale4_grid_values(self):
        grid = eval_kernel_grid(4)
        sigmas = [k.params["sigma"] for k in grid]
        want = [1.8, 2.0, 2.2, 2.4, 2.6, 2.8, 3.0, 3.2]
        np.testing.assert_allclose(sigmas, want, atol=1e-12)

    def test_scale2_endpoints(self):
        sigmas = [k.params["sigma"] for k in eval_kernel_grid(2)]
        assert abs(sigmas[0] - 0.80) < 1e-12 and abs(sigmas[-1] - 1.60) < 1e-12
        assert len(sigmas) == 8

    def test_scale3_range(self):
        sigmas = [k.params["sigma"] for k in eval_kernel_grid(3)]
        assert abs(sigmas[0] - 1.35) < 1e-12 and abs(sigmas[-1] - 2.40) < 1e-12

    def test_all_normalized(self):
        for k in eval_kernel_grid(4):
            assert abs(k.values.sum() - 1.0) < 1e-12

    def test_invalid_scale(self):
        with pytest.raises(ValueError, match="grid"):
            eval_kernel_grid(5)

    def test_degrade_with_fixed_kernel(self):
        hr = np.random.default_rng(7).random((1, 3, 32, 32)).astype(np.float32)
        lr = degrade_with_kernel(hr, eval_kernel_grid(4)[0], 4)
        assert lr.shape == (1, 3, 8, 8)
        # delta kernel reduces to plain resize
        lr2 = degrade_with_kernel(hr, delta_kernel(21), 4)
        want = resize_array(blur_reflect(hr, delta_kernel(21).values), 8, 8)
        assert np.array_equal(lr2.data, want)
