"""Volumetric containers and bit-exact file I/O.

Grids are indexed (x, y, z) with x fastest in the flat/file layout, which
matches the k-space lattice ordering in :mod:`kreg.geometry`.

KVOL container format (little-endian throughout)::

    bytes 0-3   magic "KVOL"
    byte  4     version, 0x01
    byte  5     dtype: 1 = real float32, 2 = complex64 (interleaved re, im)
    bytes 6-17  u32 N_x, N_y, N_z
    bytes 18-29 f32 v_x, v_y, v_z  (mm)
    bytes 30-33 f32 echo-time count n (a small nonnegative integer; 0 allowed)
    then        n * f32 echo times (s)
    then        raw samples, float32, x fastest

Storage is 32-bit; computation elsewhere accumulates in 64-bit. PGM export
writes binary "P5" with maxval 65535 (16-bit samples, big-endian per the
PGM specification).
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError

__all__ = [
    "ComplexVolume",
    "ScalarVolume",
    "Mask",
    "write_vol",
    "read_vol",
    "export_slice_pgm",
    "sphere_mask",
]

_MAGIC = b"KVOL"
_VERSION = 1
_DTYPE_REAL = 1
_DTYPE_COMPLEX = 2


def _check_dims(dims):
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or any(d < 1 for d in dims):
        raise ValueError("dims must be three positive integers")
    return dims


def _check_voxels(voxel_sizes):
    vox = tuple(float(v) for v in voxel_sizes)
    if len(vox) != 3 or any(v <= 0 for v in vox):
        raise ValueError("voxel sizes must be three positive reals")
    return vox


def _freeze(arr):
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ComplexVolume:
    """Immutable 3D complex grid with voxel-size metadata."""

    dims: tuple
    voxel_sizes: tuple
    data: np.ndarray
    echo_times_s: tuple = field(default_factory=tuple)

    def __post_init__(self):
        dims = _check_dims(self.dims)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "voxel_sizes", _check_voxels(self.voxel_sizes))
        data = np.asarray(self.data)
        if not np.iscomplexobj(data):
            data = data.astype(np.complex128)
        if data.size != np.prod(dims):
            raise ValueError("data length must equal the product of dims")
        object.__setattr__(self, "data", _freeze(data.reshape(dims, order="F").copy(order="C")))
        object.__setattr__(self, "echo_times_s", tuple(float(t) for t in self.echo_times_s))

    def flat(self):
        """Samples in file order (x fastest)."""
        return self.data.ravel(order="F")


@dataclass(frozen=True)
class ScalarVolume:
    """Immutable 3D real grid with voxel-size metadata."""

    dims: tuple
    voxel_sizes: tuple
    data: np.ndarray
    echo_times_s: tuple = field(default_factory=tuple)

    def __post_init__(self):
        dims = _check_dims(self.dims)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "voxel_sizes", _check_voxels(self.voxel_sizes))
        data = np.asarray(self.data)
        if np.iscomplexobj(data):
            raise ValueError("ScalarVolume requires real data")
        data = data.astype(np.float64) if data.dtype not in (np.float32, np.float64) else data
        if data.size != np.prod(dims):
            raise ValueError("data length must equal the product of dims")
        object.__setattr__(self, "data", _freeze(data.reshape(dims, order="F").copy(order="C")))
        object.__setattr__(self, "echo_times_s", tuple(float(t) for t in self.echo_times_s))

    def flat(self):
        return self.data.ravel(order="F")


@dataclass(frozen=True)
class Mask:
    """Boolean voxel selection over a grid of the same dims."""

    dims: tuple
    data: np.ndarray

    def __post_init__(self):
        dims = _check_dims(self.dims)
        object.__setattr__(self, "dims", dims)
        data = np.asarray(self.data, dtype=bool)
        if data.size != np.prod(dims):
            raise ValueError("mask length must equal the product of dims")
        object.__setattr__(self, "data", _freeze(data.reshape(dims, order="F").copy(order="C")))

    @property
    def count(self):
        return int(self.data.sum())


def write_vol(volume, path):
    """Serialize a ComplexVolume or ScalarVolume to a KVOL file."""
    if isinstance(volume, ComplexVolume):
        dtype_code = _DTYPE_COMPLEX
        payload = volume.flat().astype("<c8")
    elif isinstance(volume, ScalarVolume):
        dtype_code = _DTYPE_REAL
        payload = volume.flat().astype("<f4")
    else:
        raise TypeError("write_vol expects a ComplexVolume or ScalarVolume")
    tes = volume.echo_times_s
    header = _MAGIC + struct.pack("<BB", _VERSION, dtype_code)
    header += struct.pack("<3I", *volume.dims)
    header += struct.pack("<3f", *volume.voxel_sizes)
    header += struct.pack("<f", float(len(tes)))
    header += struct.pack(f"<{len(tes)}f", *tes) if tes else b""
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload.tobytes())


def read_vol(path):
    """Read a KVOL file back into the matching volume type."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 34:
        raise FormatError("file truncated before header end", len(raw))
    if raw[0:4] != _MAGIC:
        raise FormatError(f"bad magic {raw[0:4]!r}", 0)
    version = raw[4]
    if version != _VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    dtype_code = raw[5]
    if dtype_code not in (_DTYPE_REAL, _DTYPE_COMPLEX):
        raise FormatError(f"unknown dtype code {dtype_code}", 5)
    dims = struct.unpack_from("<3I", raw, 6)
    vox = struct.unpack_from("<3f", raw, 18)
    (te_count_f,) = struct.unpack_from("<f", raw, 30)
    if te_count_f < 0 or te_count_f != int(te_count_f):
        raise FormatError(f"echo-time count {te_count_f} is not a nonnegative integer", 30)
    n_te = int(te_count_f)
    offset = 34
    if len(raw) < offset + 4 * n_te:
        raise FormatError("file truncated inside echo-time table", len(raw))
    tes = struct.unpack_from(f"<{n_te}f", raw, offset)
    offset += 4 * n_te
    count = int(np.prod(dims))
    item = 8 if dtype_code == _DTYPE_COMPLEX else 4
    if len(raw) != offset + count * item:
        raise FormatError(
            f"payload size {len(raw) - offset} does not match dims {dims}", offset
        )
    buf = np.frombuffer(raw, dtype="<c8" if dtype_code == _DTYPE_COMPLEX else "<f4", offset=offset)
    cls = ComplexVolume if dtype_code == _DTYPE_COMPLEX else ScalarVolume
    return cls(dims=dims, voxel_sizes=vox, data=buf.copy(), echo_times_s=tes)


_SLICE_AXES = {0: (1, 2), 1: (0, 2), 2: (0, 1)}


def export_slice_pgm(volume, axis, index, window, path):
    """Write one slice as a 16-bit binary PGM.

    Intensity mapping: v -> round(65535 * clamp((v - lo)/(hi - lo), 0, 1)).
    The image row direction is the second remaining axis and the column
    direction the first, so an axis=2 slice is N_x wide and N_y tall.
    """
    if not isinstance(volume, ScalarVolume):
        raise TypeError("PGM export expects a ScalarVolume")
    if axis not in _SLICE_AXES:
        raise ValueError("axis must be 0, 1 or 2")
    if not (0 <= index < volume.dims[axis]):
        raise ValueError(f"slice index {index} outside axis {axis} of dims {volume.dims}")
    lo, hi = float(window[0]), float(window[1])
    if not lo < hi:
        raise ValueError("window must satisfy lo < hi")
    sl = [slice(None)] * 3
    sl[axis] = index
    plane = volume.data[tuple(sl)]  # (first remaining axis, second remaining axis)
    scaled = np.clip((plane.astype(np.float64) - lo) / (hi - lo), 0.0, 1.0)
    pixels = np.rint(65535.0 * scaled).astype(">u2")
    width, height = plane.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n65535\n".encode("ascii"))
        fh.write(pixels.T.tobytes())  # rows = second remaining axis


def sphere_mask(dims, center_vox, radius_vox):
    """Mask of voxels within ``radius_vox`` of ``center_vox`` (inclusive)."""
    if radius_vox < 0:
        raise ValueError("radius must be nonnegative")
    dims = _check_dims(dims)
    cx, cy, cz = (float(c) for c in center_vox)
    x, y, z = np.meshgrid(*(np.arange(n) for n in dims), indexing="ij")
    dist2 = (x - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2
    return Mask(dims=dims, data=dist2 <= radius_vox**2)
