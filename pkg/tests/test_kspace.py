import hashlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gancs import kspace
from gancs.kspace import SamplingMask

from conftest import complex_normal

# sha256 of the serialized (64, 64, 0.2, 3.0, seed 0) mask, frozen at first build
MASK_64_SHA256 = "4f033457d756c77d4ade2f899a7b866b1e872f2b5ce8e3520f9e9aac5aa4e120"


def radius_grid(h, w):
    yy, xx = np.meshgrid(np.arange(h) - h // 2, np.arange(w) - w // 2, indexing="ij")
    return np.hypot(yy, xx)


class TestMask:
    def test_count_200x100(self):
        m = kspace.make_vardens_mask(200, 100, 0.20, 3.0, 7)
        assert m.count == 4000
        assert m.shape == (200, 100)

    def test_full_fraction_is_all_ones(self):
        m = kspace.make_vardens_mask(64, 64, 1.0, 3.0, 0)
        assert np.all(m.indicator == 1.0)

    def test_sampled_points_closer_to_center(self):
        m = kspace.make_vardens_mask(64, 64, 0.20, 3.0, 0)
        r = radius_grid(64, 64)
        assert r[m.bool_indicator].mean() < r[~m.bool_indicator].mean()

    def test_center_square_always_sampled(self):
        for seed in range(5):
            m = kspace.make_vardens_mask(100, 60, 0.05, 3.0, seed)
            side = kspace.center_side(100, 60)
            assert side == 3
            r0, c0 = 50 - side // 2, 30 - side // 2
            assert np.all(m.bool_indicator[r0 : r0 + side, c0 : c0 + side])

    def test_deterministic_and_frozen(self):
        a = kspace.make_vardens_mask(64, 64, 0.2, 3.0, 0)
        b = kspace.make_vardens_mask(64, 64, 0.2, 3.0, 0)
        assert kspace.mask_to_bytes(a) == kspace.mask_to_bytes(b)
        assert hashlib.sha256(kspace.mask_to_bytes(a)).hexdigest() == MASK_64_SHA256

    def test_seed_changes_mask(self):
        a = kspace.make_vardens_mask(64, 64, 0.2, 3.0, 0)
        b = kspace.make_vardens_mask(64, 64, 0.2, 3.0, 1)
        assert a.count == b.count
        assert not np.array_equal(a.indicator, b.indicator)

    @settings(max_examples=40, deadline=None)
    @given(
        h=st.integers(8, 80),
        w=st.integers(8, 80),
        frac=st.floats(0.05, 1.0),
        power=st.floats(0.5, 6.0),
        seed=st.integers(0, 2**32),
    )
    def test_exact_count(self, h, w, frac, power, seed):
        side = kspace.center_side(h, w)
        if side * side > round(frac * h * w):
            with pytest.raises(ValueError):
                kspace.make_vardens_mask(h, w, frac, power, seed)
            return
        m = kspace.make_vardens_mask(h, w, frac, power, seed)
        assert abs(m.count - round(frac * h * w)) <= 1

    def test_radial_symmetry_in_expectation(self):
        # the center sits at index 32, so compare the four 31x31 quadrants
        # that exclude the center row and column
        acc = np.zeros((64, 64))
        for seed in range(40):
            acc += kspace.make_vardens_mask(64, 64, 0.2, 3.0, seed).indicator
        q = [acc[1:32, 1:32].sum(), acc[1:32, 33:].sum(), acc[33:, 1:32].sum(), acc[33:, 33:].sum()]
        assert max(q) / min(q) < 1.1

    @pytest.mark.parametrize("frac", [0.0, -0.1, 1.5])
    def test_bad_fraction(self, frac):
        with pytest.raises(ValueError):
            kspace.make_vardens_mask(32, 32, frac, 3.0, 0)

    def test_center_exceeds_budget(self):
        with pytest.raises(ValueError):
            kspace.make_vardens_mask(100, 100, 0.0005, 3.0, 0)

    def test_too_small(self):
        with pytest.raises(ValueError):
            kspace.make_vardens_mask(3, 8, 0.5, 3.0, 0)


class TestMaskSerialization:
    def test_round_trip(self, tmp_path):
        m = kspace.make_vardens_mask(37, 21, 0.3, 2.0, 5)
        path = tmp_path / "m.gcsm"
        kspace.save_mask(m, path)
        back = kspace.load_mask(path)
        assert back == m
        assert back.fraction == m.fraction and back.seed == m.seed and back.density_power == m.density_power

    def test_header_layout(self):
        m = kspace.make_vardens_mask(8, 8, 0.5, 3.0, 9)
        blob = kspace.mask_to_bytes(m)
        assert blob[:4] == b"GCSM"
        assert int.from_bytes(blob[4:6], "little") == 1
        assert int.from_bytes(blob[6:10], "little") == 8
        assert len(blob) == 4 + 2 + 4 + 4 + 8 + 8 + 8 + 8
        # first row, MSB first
        row = m.bool_indicator[0]
        assert blob[-8] == int("".join("1" if b else "0" for b in row), 2)

    @pytest.mark.parametrize("blob", [b"", b"XXXX" + bytes(40), b"GCSM\x01\x00"])
    def test_corrupt(self, blob):
        with pytest.raises(ValueError):
            kspace.mask_from_bytes(blob)

    def test_truncated_bits(self):
        blob = kspace.mask_to_bytes(kspace.make_vardens_mask(16, 16, 0.5, 3.0, 0))
        with pytest.raises(ValueError):
            kspace.mask_from_bytes(blob[:-1])


class TestOperators:
    def test_zero_image(self):
        m = kspace.make_vardens_mask(16, 16, 0.3, 3.0, 0)
        assert np.all(kspace.forward(np.zeros((16, 16)), m) == 0)
        assert np.all(kspace.adjoint(np.zeros((16, 16), complex), m) == 0)

    def test_constant_image_dc(self):
        c, h, w = 0.7 - 0.2j, 16, 12
        y = kspace.forward(np.full((h, w), c), kspace.full_mask(h, w))
        nz = np.argwhere(np.abs(y) > 1e-12)
        assert nz.tolist() == [[h // 2, w // 2]]
        assert abs(y[h // 2, w // 2] - c * np.sqrt(h * w)) < 1e-12

    def test_energy_bound(self, rng):
        x = complex_normal(rng, (32, 32))
        m = kspace.make_vardens_mask(32, 32, 0.2, 3.0, 0)
        assert np.linalg.norm(kspace.forward(x, m)) < np.linalg.norm(x)
        full = np.linalg.norm(kspace.forward(x, kspace.full_mask(32, 32)))
        assert abs(full - np.linalg.norm(x)) / np.linalg.norm(x) < 1e-12

    @pytest.mark.parametrize("shape", [(16, 16), (64, 64), (200, 100)])
    def test_adjoint_dot_product(self, shape, rng):
        m = kspace.make_vardens_mask(*shape, 0.3, 3.0, 1)
        for _ in range(10):
            x = complex_normal(rng, shape)
            y = complex_normal(rng, shape) * m.indicator
            lhs = np.vdot(kspace.forward(x, m), y)
            rhs = np.vdot(x, kspace.adjoint(y, m))
            assert abs(lhs - rhs) / (np.linalg.norm(x) * np.linalg.norm(y)) < 1e-12

    def test_unitary_round_trip(self, rng):
        x = complex_normal(rng, (24, 40))
        m = kspace.full_mask(24, 40)
        back = kspace.adjoint(kspace.forward(x, m), m)
        assert np.linalg.norm(back - x) / np.linalg.norm(x) < 1e-10

    def test_batched(self, rng):
        x = complex_normal(rng, (3, 16, 16))
        m = kspace.make_vardens_mask(16, 16, 0.4, 3.0, 0)
        y = kspace.forward(x, m)
        for i in range(3):
            np.testing.assert_array_equal(y[i], kspace.forward(x[i], m))

    def test_shape_mismatch(self, rng):
        m = kspace.make_vardens_mask(16, 16, 0.4, 3.0, 0)
        with pytest.raises(ValueError):
            kspace.forward(np.zeros((16, 8)), m)
        with pytest.raises(ValueError):
            kspace.adjoint(np.zeros((8, 16)), m)
        with pytest.raises(ValueError):
            kspace.project_data_consistent(np.zeros((16, 16)), np.zeros((8, 8)), m)


class TestProjections:
    @pytest.fixture
    def setup(self, rng):
        m = kspace.make_vardens_mask(32, 32, 0.2, 3.0, 3)
        x = complex_normal(rng, (32, 32))
        y = kspace.forward(complex_normal(rng, (32, 32)), m)
        return m, x, y

    def test_data_consistency(self, setup):
        m, x, y = setup
        p = kspace.project_data_consistent(x, y, m)
        assert np.linalg.norm(kspace.forward(p, m) - y) / np.linalg.norm(y) < 1e-8

    def test_idempotent(self, setup):
        m, x, y = setup
        p1 = kspace.project_data_consistent(x, y, m)
        p2 = kspace.project_data_consistent(p1, y, m)
        assert np.linalg.norm(p2 - p1) / np.linalg.norm(p1) < 1e-10

    def test_fixed_point(self, setup):
        m, x, _ = setup
        y = kspace.forward(x, m)
        p = kspace.project_data_consistent(x, y, m)
        assert np.linalg.norm(p - x) / np.linalg.norm(x) < 1e-10

    def test_zero_input_gives_zero_filled(self, setup):
        m, _, y = setup
        p = kspace.project_data_consistent(np.zeros((32, 32), complex), y, m)
        np.testing.assert_allclose(p, kspace.adjoint(y, m), atol=1e-12)

    def test_nullspace(self, setup):
        m, x, _ = setup
        n = kspace.nullspace_project(x, m)
        assert np.max(np.abs(kspace.forward(n, m))) < 1e-10
        rebuilt = n + kspace.adjoint(kspace.forward(x, m), m)
        assert np.linalg.norm(rebuilt - x) / np.linalg.norm(x) < 1e-10
        full = kspace.full_mask(32, 32)
        assert np.max(np.abs(kspace.nullspace_project(x, full))) < 1e-12

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000), frac=st.floats(0.1, 0.9))
    def test_projection_property(self, seed, frac):
        r = np.random.default_rng(seed)
        m = kspace.make_vardens_mask(16, 20, frac, 2.0, seed)
        x = complex_normal(r, (16, 20))
        y = kspace.forward(complex_normal(r, (16, 20)), m)
        p = kspace.project_data_consistent(x, y, m)
        assert np.linalg.norm(kspace.forward(p, m) - y) <= 1e-8 * np.linalg.norm(y)
        p2 = kspace.project_data_consistent(p, y, m)
        assert np.linalg.norm(p2 - p) <= 1e-10 * np.linalg.norm(p)


class TestNoise:
    def test_zero_sigma(self, rng):
        m = kspace.make_vardens_mask(16, 16, 0.3, 3.0, 0)
        y = kspace.forward(complex_normal(rng, (16, 16)), m)
        np.testing.assert_array_equal(kspace.add_noise(y, m, 0.0, 1), y)

    def test_std_and_support(self):
        m = kspace.make_vardens_mask(1000, 1000, 0.5, 1.0, 0)
        y = np.zeros((1000, 1000), complex)
        noisy = kspace.add_noise(y, m, 1.0, 3)
        s = noisy[m.bool_indicator]
        assert s.size >= 500_000
        both = np.concatenate([s.real, s.imag])
        assert 0.995 <= both.std() <= 1.005
        assert np.all(noisy[~m.bool_indicator] == 0)

    def test_deterministic(self):
        m = kspace.make_vardens_mask(16, 16, 0.3, 3.0, 0)
        y = np.zeros((16, 16), complex)
        np.testing.assert_array_equal(kspace.add_noise(y, m, 0.3, 5), kspace.add_noise(y, m, 0.3, 5))

    def test_negative_sigma(self):
        m = kspace.make_vardens_mask(16, 16, 0.3, 3.0, 0)
        with pytest.raises(ValueError):
            kspace.add_noise(np.zeros((16, 16), complex), m, -1.0, 0)


def test_mask_equality_ignores_identity():
    a = kspace.full_mask(4, 4)
    assert isinstance(a, SamplingMask)
    assert a == kspace.full_mask(4, 4)
    assert a != kspace.full_mask(4, 5)
