import os
import struct
import tempfile

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kreg.errors import FormatError
from kreg.volume import (
    ComplexVolume,
    Mask,
    ScalarVolume,
    export_slice_pgm,
    read_vol,
    sphere_mask,
    write_vol,
)


class TestKvolRoundTrip:
    def test_zero_complex_volume(self, tmp_path):
        vol = ComplexVolume(dims=(2, 2, 2), voxel_sizes=(1, 1, 1),
                            data=np.zeros(8, dtype=np.complex64))
        path = tmp_path / "z.kvol"
        write_vol(vol, path)
        back = read_vol(path)
        assert isinstance(back, ComplexVolume)
        assert back.dims == (2, 2, 2)
        assert np.array_equal(back.data, vol.data)

    def test_ramp_real_volume(self, tmp_path):
        data = np.arange(24, dtype=np.float32)
        vol = ScalarVolume(dims=(2, 3, 4), voxel_sizes=(1, 2, 3), data=data)
        path = tmp_path / "r.kvol"
        write_vol(vol, path)
        back = read_vol(path)
        assert isinstance(back, ScalarVolume)
        assert np.array_equal(back.flat(), data)

    def test_header_voxels_and_echoes_read_back_exactly(self, tmp_path):
        vol = ScalarVolume(
            dims=(2, 2, 2), voxel_sizes=(0.7, 0.7, 1.4),
            data=np.zeros(8, dtype=np.float32), echo_times_s=(0.00794, 0.01594),
        )
        path = tmp_path / "h.kvol"
        write_vol(vol, path)
        back = read_vol(path)
        # storage is float32: read-back equals the float32 rounding exactly
        assert back.voxel_sizes == tuple(float(np.float32(v)) for v in (0.7, 0.7, 1.4))
        assert back.echo_times_s == tuple(float(np.float32(t)) for t in (0.00794, 0.01594))

    @given(
        st.integers(min_value=1, max_value=8),
        st.integers(min_value=1, max_value=8),
        st.integers(min_value=1, max_value=8),
        st.booleans(),
        st.integers(min_value=0, max_value=2**31 - 1),
    )
    @settings(max_examples=20, deadline=None)
    def test_random_volumes_bit_exact(self, nx, ny, nz, complex_data, seed):
        rng = np.random.default_rng(seed)
        n = nx * ny * nz
        if complex_data:
            data = (rng.standard_normal(n) + 1j * rng.standard_normal(n)).astype(np.complex64)
            vol = ComplexVolume(dims=(nx, ny, nz), voxel_sizes=(0.5, 1.0, 2.0), data=data)
        else:
            data = rng.standard_normal(n).astype(np.float32)
            vol = ScalarVolume(dims=(nx, ny, nz), voxel_sizes=(0.5, 1.0, 2.0), data=data)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "v.kvol")
            write_vol(vol, path)
            back = read_vol(path)
        assert back.dims == (nx, ny, nz)
        assert np.array_equal(back.flat(), data)  # bit-exact


class TestKvolFormatErrors:
    def _draft(self, tmp_path):
        vol = ScalarVolume(dims=(2, 2, 2), voxel_sizes=(1, 1, 1),
                           data=np.zeros(8, dtype=np.float32))
        path = tmp_path / "f.kvol"
        write_vol(vol, path)
        return path

    def test_bad_magic_offset_zero(self, tmp_path):
        path = self._draft(tmp_path)
        raw = bytearray(path.read_bytes())
        raw[:4] = b"NOPE"
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError) as err:
            read_vol(path)
        assert err.value.offset == 0

    def test_bad_version(self, tmp_path):
        path = self._draft(tmp_path)
        raw = bytearray(path.read_bytes())
        raw[4] = 9
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError) as err:
            read_vol(path)
        assert err.value.offset == 4

    def test_bad_dtype(self, tmp_path):
        path = self._draft(tmp_path)
        raw = bytearray(path.read_bytes())
        raw[5] = 7
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError) as err:
            read_vol(path)
        assert err.value.offset == 5

    def test_truncated_payload(self, tmp_path):
        path = self._draft(tmp_path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-3])
        with pytest.raises(FormatError):
            read_vol(path)

    def test_fractional_echo_count_rejected(self, tmp_path):
        path = self._draft(tmp_path)
        raw = bytearray(path.read_bytes())
        raw[30:34] = struct.pack("<f", 1.5)
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError) as err:
            read_vol(path)
        assert err.value.offset == 30


class TestPgmExport:
    def _vol(self, data, dims):
        return ScalarVolume(dims=dims, voxel_sizes=(1, 1, 1), data=data)

    def _read_pgm(self, path):
        raw = path.read_bytes()
        magic, size, maxval, rest = raw.split(b"\n", 3)
        assert magic == b"P5"
        w, h = map(int, size.split())
        assert int(maxval) == 65535
        pixels = np.frombuffer(rest, dtype=">u2").reshape(h, w)
        return pixels

    def test_constant_at_window_low_is_zero(self, tmp_path):
        vol = self._vol(np.full(64, 2.0, dtype=np.float64), (4, 4, 4))
        p = tmp_path / "lo.pgm"
        export_slice_pgm(vol, 2, 1, (2.0, 5.0), p)
        assert (self._read_pgm(p) == 0).all()

    def test_constant_at_window_high_saturates(self, tmp_path):
        vol = self._vol(np.full(64, 7.0, dtype=np.float64), (4, 4, 4))
        p = tmp_path / "hi.pgm"
        export_slice_pgm(vol, 2, 0, (2.0, 7.0), p)
        assert (self._read_pgm(p) == 65535).all()

    def test_ramp_matches_per_pixel_formula(self, tmp_path):
        nx, ny, nz = 6, 5, 3
        x = np.arange(nx, dtype=np.float64)
        data = np.broadcast_to(x[:, None, None], (nx, ny, nz)).ravel(order="F")
        vol = self._vol(data.copy(), (nx, ny, nz))
        lo, hi = 1.0, 4.0
        p = tmp_path / "ramp.pgm"
        export_slice_pgm(vol, 2, 1, (lo, hi), p)
        pixels = self._read_pgm(p)
        assert pixels.shape == (ny, nx)
        expected = np.rint(65535 * np.clip((x - lo) / (hi - lo), 0, 1)).astype(np.uint16)
        for row in pixels:
            assert np.array_equal(row, expected)
            assert np.all(np.diff(row.astype(int)) >= 0)

    def test_slice_dims_per_axis(self, tmp_path):
        vol = self._vol(np.zeros(3 * 4 * 5), (3, 4, 5))
        for axis, (w, h) in [(0, (4, 5)), (1, (3, 5)), (2, (3, 4))]:
            p = tmp_path / f"ax{axis}.pgm"
            export_slice_pgm(vol, axis, 0, (0.0, 1.0), p)
            assert self._read_pgm(p).shape == (h, w)

    def test_out_of_range_index(self, tmp_path):
        vol = self._vol(np.zeros(27), (3, 3, 3))
        with pytest.raises(ValueError):
            export_slice_pgm(vol, 2, 3, (0.0, 1.0), tmp_path / "x.pgm")
        with pytest.raises(ValueError):
            export_slice_pgm(vol, 0, 0, (1.0, 1.0), tmp_path / "y.pgm")


class TestSphereMask:
    def test_radius_zero_single_voxel(self):
        mask = sphere_mask((5, 5, 5), (2, 2, 2), 0.0)
        assert mask.count == 1
        assert mask.data[2, 2, 2]

    def test_huge_radius_covers_grid(self):
        mask = sphere_mask((4, 5, 6), (0, 0, 0), 100.0)
        assert mask.count == 4 * 5 * 6

    def test_count_matches_brute_force(self):
        dims, center, radius = (16, 16, 16), (8, 8, 8), 5.0
        mask = sphere_mask(dims, center, radius)
        count = 0
        for i in range(16):
            for j in range(16):
                for k in range(16):
                    if (i - 8) ** 2 + (j - 8) ** 2 + (k - 8) ** 2 <= radius**2:
                        count += 1
        assert mask.count == count

    def test_negative_radius_rejected(self):
        with pytest.raises(ValueError):
            sphere_mask((4, 4, 4), (1, 1, 1), -1.0)


class TestContainers:
    def test_data_length_validation(self):
        with pytest.raises(ValueError):
            ScalarVolume(dims=(2, 2, 2), voxel_sizes=(1, 1, 1), data=np.zeros(7))
        with pytest.raises(ValueError):
            Mask(dims=(2, 2, 2), data=np.zeros(9, dtype=bool))

    def test_volumes_are_immutable(self):
        vol = ScalarVolume(dims=(2, 2, 2), voxel_sizes=(1, 1, 1), data=np.zeros(8))
        with pytest.raises(ValueError):
            vol.data[0, 0, 0] = 1.0

    def test_scalar_rejects_complex(self):
        with pytest.raises(ValueError):
            ScalarVolume(dims=(2, 2, 2), voxel_sizes=(1, 1, 1),
                         data=np.zeros(8, dtype=complex))
