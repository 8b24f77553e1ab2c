import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from acoumap.errors import ParameterError, SchemaError
from acoumap.geometry import (
    UMAP_MAX_DISTANCE_M,
    UMAP_MIN_DISTANCE_M,
    DelayDecomposition,
    Microphone,
    MicrophoneArray,
    SteeringVector,
    build_delay_table,
    build_steering_grid,
    build_umap_array,
    delay_decomposition,
    delay_index,
    load_array,
    save_array,
)


class TestUmapArray:
    def test_microphone_counts(self):
        array = build_umap_array()
        assert array.size == 12
        radii = np.linalg.norm(array.positions, axis=1)
        assert np.sum(radii < 0.02) == 4  # inner circle
        assert np.sum(radii > 0.03) == 8  # outer circle

    def test_pairwise_distance_extremes(self):
        d = build_umap_array().pairwise_distances()
        assert d.min() == pytest.approx(UMAP_MIN_DISTANCE_M, abs=1e-5)
        assert d.max() == pytest.approx(UMAP_MAX_DISTANCE_M, abs=1e-5)

    def test_centered_and_planar(self):
        pos = build_umap_array().positions
        assert np.abs(pos.mean(axis=0)).max() < 1e-12
        assert np.all(pos[:, 2] == 0.0)

    def test_exactly_mirror_symmetric(self):
        # Reflecting x -> -x permutes the microphone set with no residue.
        pos = build_umap_array().positions
        mirrored = pos * np.array([-1.0, 1.0, 1.0])
        for row in mirrored:
            assert any(np.array_equal(row, p) for p in pos)


class TestMicrophoneValidation:
    def test_rejects_non_finite(self):
        with pytest.raises(ParameterError):
            Microphone(np.array([np.nan, 0.0, 0.0]))

    def test_rejects_out_of_scale(self):
        with pytest.raises(ParameterError):
            Microphone(np.array([1.5, 0.0, 0.0]))

    def test_rejects_duplicate_positions(self):
        m = Microphone(np.array([0.01, 0.0, 0.0]))
        with pytest.raises(ParameterError):
            MicrophoneArray((m, Microphone(np.array([0.01, 0.0, 0.0]))))

    def test_rejects_empty_array(self):
        with pytest.raises(ParameterError):
            MicrophoneArray(())


class TestDelayIndex:
    def test_zero_at_origin(self):
        mic = Microphone(np.zeros(3))
        v = SteeringVector(np.array([0.0, 0.0, 1.0]))
        assert delay_index(mic, v, 343.0, 130208.0) == 0.0

    def test_hand_computed_value(self):
        # 130208 * 0.04064 / 343, evaluated independently.
        mic = Microphone(np.array([0.04064, 0.0, 0.0]))
        v = SteeringVector(np.array([1.0, 0.0, 0.0]))
        got = delay_index(mic, v, 343.0, 130208.0)
        assert got == pytest.approx(15.427, abs=1e-3)
        assert got == pytest.approx(15.427560116618075, rel=1e-12)

    def test_antisymmetric_in_direction(self):
        mic = Microphone(np.array([0.02, -0.013, 0.004]))
        d = np.array([0.3, -0.5, 0.6])
        d /= np.linalg.norm(d)
        plus = delay_index(mic, SteeringVector(d), 343.0, 48000.0)
        minus = delay_index(mic, SteeringVector(-d), 343.0, 48000.0)
        assert plus == -minus

    def test_linear_in_position(self):
        v = SteeringVector(np.array([0.0, 1.0, 0.0]))
        one = delay_index(Microphone(np.array([0.0, 0.01, 0.0])), v, 343.0, 48000.0)
        three = delay_index(Microphone(np.array([0.0, 0.03, 0.0])), v, 343.0, 48000.0)
        assert three == pytest.approx(3.0 * one, rel=1e-12)

    def test_rejects_bad_parameters(self):
        mic = Microphone(np.zeros(3))
        v = SteeringVector(np.array([0.0, 0.0, 1.0]))
        with pytest.raises(ParameterError):
            delay_index(mic, v, 0.0, 48000.0)
        with pytest.raises(ParameterError):
            delay_index(mic, v, 343.0, -1.0)


class TestDelayDecomposition:
    def test_fractional_example(self):
        d = delay_decomposition(15.427, 4)
        assert (d.floor_index, d.ceil_index) == (15, 16)
        assert d.alpha == pytest.approx(0.427, abs=1e-12)
        assert d.alpha_frac == 7  # round(0.427 * 16) = round(6.832)

    def test_integer_input(self):
        for n in (0, 4, 16):
            d = delay_decomposition(7.0, n)
            assert (d.floor_index, d.ceil_index, d.alpha, d.alpha_frac) == (7, 7, 0.0, 0)

    def test_overflow_bumps_indices(self):
        # round(0.97 * 16) = 16 overflows the 4-bit weight
        d = delay_decomposition(15.97, 4)
        assert (d.floor_index, d.ceil_index, d.alpha_frac) == (16, 17, 0)

    def test_negative_values(self):
        d = delay_decomposition(-2.3, 4)
        assert (d.floor_index, d.ceil_index) == (-3, -2)
        assert d.alpha == pytest.approx(0.7, abs=1e-12)
        assert d.alpha_frac == 11  # round(0.7 * 16)

    def test_rejects_negative_bits(self):
        with pytest.raises(ParameterError):
            delay_decomposition(1.5, -1)

    @given(st.floats(min_value=-500.0, max_value=500.0), st.integers(0, 20))
    def test_floor_plus_alpha_reconstructs_exactly(self, exact, n):
        d = delay_decomposition(exact, n)
        assert d.floor_index + d.alpha == exact
        assert d.ceil_index - d.floor_index in (0, 1)
        assert 0 <= d.alpha_frac < 2**n

    @given(st.integers(1, 16))
    def test_quantized_delay_monotone(self, n):
        # floor + alpha_frac / 2^n is nondecreasing in the exact delay,
        # including across overflow bumps.
        values = np.linspace(-3.0, 3.0, 1201)
        quantized = [
            d.floor_index + d.alpha_frac / 2**n
            for d in (delay_decomposition(v, n) for v in values)
        ]
        assert all(a <= b for a, b in zip(quantized, quantized[1:]))


class TestSteeringGrid:
    def test_center_pixel_is_broadside(self):
        g = build_steering_grid(3, 3, 60.0, 60.0)
        assert np.allclose(g.directions[1, 1], [0.0, 0.0, 1.0])

    def test_corner_azimuths(self):
        g = build_steering_grid(3, 3, 60.0, 60.0)
        assert set(np.round(g.azimuth_deg, 9)) == {-30.0, 0.0, 30.0}
        assert set(np.round(g.elevation_deg, 9)) == {-30.0, 0.0, 30.0}

    def test_full_resolution_unit_norms(self):
        g = build_steering_grid(640, 480, 60.0, 60.0)
        norms = np.linalg.norm(g.flat_directions(), axis=1)
        assert norms.shape == (307200,)
        assert np.abs(norms - 1.0).max() <= 1e-12

    @pytest.mark.parametrize("width,height", [(4, 3), (5, 5), (64, 48)])
    def test_mirror_symmetry_exact(self, width, height):
        g = build_steering_grid(width, height, 60.0, 50.0)
        flipped = g.directions[:, ::-1] * np.array([-1.0, 1.0, 1.0])
        assert np.array_equal(g.directions, flipped)

    def test_row_zero_is_top(self):
        g = build_steering_grid(3, 3, 60.0, 60.0)
        assert g.elevation_deg[0] == 30.0
        assert g.direction(1, 0).direction[1] > 0

    def test_rejects_bad_fov(self):
        with pytest.raises(ParameterError):
            build_steering_grid(3, 3, 0.0, 60.0)
        with pytest.raises(ParameterError):
            build_steering_grid(3, 3, 60.0, 190.0)

    def test_rejects_bad_dimensions(self):
        with pytest.raises(ParameterError):
            build_steering_grid(0, 3, 60.0, 60.0)


class TestDelayTable:
    def test_single_origin_microphone_all_zero(self):
        array = MicrophoneArray((Microphone(np.zeros(3)),))
        grid = build_steering_grid(5, 5, 60.0, 60.0)
        table = build_delay_table(array, grid, c=343.0, fs=48000.0)
        assert np.all(table.exact == 0.0)

    def test_umap_aperture_bound(self):
        array = build_umap_array()
        grid = build_steering_grid(16, 12, 60.0, 60.0)
        fs, c = 130208.0, 343.0
        table = build_delay_table(array, grid, c=c, fs=fs, frac_bits=8)
        assert table.max_abs_exact <= fs * 0.08128 / c

    def test_deterministic_bit_for_bit(self):
        array = build_umap_array()
        grid = build_steering_grid(8, 6, 60.0, 60.0)
        t1 = build_delay_table(array, grid, c=343.0, fs=32552.0, frac_bits=8)
        t2 = build_delay_table(array, grid, c=343.0, fs=32552.0, frac_bits=8)
        assert np.array_equal(t1.exact, t2.exact)
        assert np.array_equal(t1.floor_index, t2.floor_index)
        assert np.array_equal(t1.alpha_frac, t2.alpha_frac)

    def test_entries_match_scalar_decomposition(self):
        array = build_umap_array()
        grid = build_steering_grid(4, 3, 60.0, 60.0)
        fs, c, bits = 32552.0833, 343.0, 8
        table = build_delay_table(array, grid, c=c, fs=fs, frac_bits=bits)
        dirs = grid.flat_directions()
        for d in range(0, table.n_directions, 3):
            for m in range(table.n_microphones):
                exact = delay_index(
                    array.microphones[m], SteeringVector(dirs[d]), c, fs
                )
                expected = delay_decomposition(exact, bits)
                assert table.entry(d, m) == DelayDecomposition(
                    exact=table.exact[d, m],
                    floor_index=expected.floor_index,
                    ceil_index=expected.ceil_index,
                    alpha=table.exact[d, m] - expected.floor_index,
                    alpha_frac=expected.alpha_frac,
                    frac_bits=bits,
                )
                assert table.exact[d, m] == pytest.approx(exact, rel=1e-12)

    def test_immutable(self):
        array = build_umap_array()
        table = build_delay_table(array, build_steering_grid(3, 3, 60, 60), fs=48000.0)
        with pytest.raises(ValueError):
            table.exact[0, 0] = 99.0


class TestArrayFiles:
    def test_umap_by_name(self):
        assert load_array("umap").name == "umap"
        assert load_array("umap").size == 12

    def test_round_trip(self, tmp_path):
        array = build_umap_array()
        path = tmp_path / "layout.txt"
        save_array(array, path)
        loaded = load_array(path)
        assert loaded.size == array.size
        assert np.array_equal(loaded.positions, array.positions)

    def test_comments_and_commas(self, tmp_path):
        path = tmp_path / "layout.txt"
        path.write_text("# two mics\n0.01, 0.0, 0.0\n\n-0.01 0 0  # trailing\n")
        loaded = load_array(path)
        assert loaded.size == 2

    def test_rejects_bad_record(self, tmp_path):
        path = tmp_path / "layout.txt"
        path.write_text("0.01 0.0\n")
        with pytest.raises(SchemaError):
            load_array(path)

    def test_rejects_empty_file(self, tmp_path):
        path = tmp_path / "layout.txt"
        path.write_text("# nothing here\n")
        with pytest.raises(SchemaError):
            load_array(path)


def test_steering_vector_requires_unit_norm():
    with pytest.raises(ParameterError):
        SteeringVector(np.array([1.0, 1.0, 0.0]))
