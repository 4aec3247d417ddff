"""Acquisition geometry: protocols, rotations, and k-space sample lattices.

Conventions, shared by every module in the package:

* The rotation matrix ``R`` maps acquisition-frame coordinates to
  scanner-frame coordinates. The static field direction expressed in the
  image axes is therefore ``R.T @ (0, 0, 1)``.
* K-space locations are stored as an (M, 3) float array. Before
  registration the entries are in radians per acquisition voxel; after
  registration they are in radians per reference voxel, so the reference
  band is always [-pi, pi)^3.
* Flat sample order matches the volume linearization: x fastest, then y,
  then z.
* Even-sized grids use the centered convention with coordinate k - N//2,
  i.e. the -pi frequency is included and +pi is excluded.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ProtocolDescriptor",
    "ReferenceProtocol",
    "rotation_from_euler",
    "check_rotation",
    "b0_in_image_frame",
    "cartesian_kspace_lattice",
    "rotate_locations",
    "scale_locations",
]

_ORTHO_TOL = 1e-12


def check_rotation(R):
    """Validate and return a proper orthonormal 3x3 matrix as float64.

    Raises ValueError if R is not orthonormal (R @ R.T = I within 1e-12 per
    entry) or not proper (det = +1 within 1e-12).
    """
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        raise ValueError("rotation must be a finite 3x3 matrix")
    if np.max(np.abs(R @ R.T - np.eye(3))) > _ORTHO_TOL:
        raise ValueError("rotation is not orthonormal within 1e-12")
    if abs(np.linalg.det(R) - 1.0) > _ORTHO_TOL:
        raise ValueError("rotation is not proper (det != +1 within 1e-12)")
    return R


def rotation_from_euler(yaw_deg, pitch_deg, roll_deg):
    """Rotation matrix from Euler angles in degrees, composed as Z @ Y @ X.

    Yaw rotates about z, pitch about y, roll about x; the matrices multiply
    in that fixed order (yaw applied last to a column vector).
    """
    angles = (yaw_deg, pitch_deg, roll_deg)
    if not all(math.isfinite(a) for a in angles):
        raise ValueError("Euler angles must be finite")
    cz, sz = math.cos(math.radians(yaw_deg)), math.sin(math.radians(yaw_deg))
    cy, sy = math.cos(math.radians(pitch_deg)), math.sin(math.radians(pitch_deg))
    cx, sx = math.cos(math.radians(roll_deg)), math.sin(math.radians(roll_deg))
    rz = np.array([[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]])
    return rz @ ry @ rx


def b0_in_image_frame(R):
    """Unit B0 direction in image-frame coordinates: R.T @ e_z."""
    R = check_rotation(R)
    return R.T @ np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class ReferenceProtocol:
    """Non-oblique isotropic reference protocol."""

    iso_voxel_mm: float
    matrix_dims: tuple

    def __post_init__(self):
        if not (self.iso_voxel_mm > 0):
            raise ValueError("reference voxel size must be positive")
        dims = tuple(int(d) for d in self.matrix_dims)
        if len(dims) != 3 or any(d < 1 for d in dims):
            raise ValueError("reference dims must be three positive integers")
        object.__setattr__(self, "matrix_dims", dims)

    @property
    def voxel_sizes(self):
        v = self.iso_voxel_mm
        return (v, v, v)


@dataclass(frozen=True)
class ProtocolDescriptor:
    """Acquisition geometry for one protocol.

    ``rotation`` expresses the acquisition-frame axes in scanner-frame axes.
    ``fov_mm`` is shared across axes; a warning is emitted when
    ``matrix_dims[i] * voxel_sizes[i]`` disagrees with it by more than one
    voxel.
    """

    rotation: np.ndarray
    voxel_sizes: tuple
    matrix_dims: tuple
    fov_mm: float
    echo_times_s: tuple = field(default_factory=tuple)
    field_strength_T: float = 3.0

    def __post_init__(self):
        object.__setattr__(self, "rotation", check_rotation(self.rotation))
        self.rotation.flags.writeable = False
        vox = tuple(float(v) for v in self.voxel_sizes)
        if len(vox) != 3 or any(v <= 0 for v in vox):
            raise ValueError("voxel sizes must be three positive reals")
        object.__setattr__(self, "voxel_sizes", vox)
        dims = tuple(int(d) for d in self.matrix_dims)
        if len(dims) != 3 or any(d < 1 for d in dims):
            raise ValueError("matrix dims must be three positive integers")
        object.__setattr__(self, "matrix_dims", dims)
        if not (self.fov_mm > 0):
            raise ValueError("FoV must be positive")
        tes = tuple(float(t) for t in self.echo_times_s)
        if any(t <= 0 for t in tes):
            raise ValueError("echo times must be positive")
        if any(b <= a for a, b in zip(tes, tes[1:])):
            raise ValueError("echo times must be strictly increasing")
        object.__setattr__(self, "echo_times_s", tes)
        if not (self.field_strength_T > 0):
            raise ValueError("field strength must be positive")
        for d, v in zip(dims, vox):
            if abs(d * v - self.fov_mm) > v:
                warnings.warn(
                    f"matrix {d} x voxel {v} mm spans {d * v:.3f} mm, "
                    f"inconsistent with FoV {self.fov_mm} mm",
                    stacklevel=3,
                )

    @property
    def n_samples(self):
        return int(np.prod(self.matrix_dims))


def cartesian_kspace_lattice(protocol, ref=None):
    """Cartesian Fourier sample lattice of an acquisition, (M, 3) float64.

    Along axis i the values are 2*pi*(k - N_i//2)/N_i for k in [0, N_i),
    i.e. a centered grid covering [-pi, pi) in radians per acquisition
    voxel. Flat order is x fastest. ``ref`` is accepted for interface
    symmetry with the registration transforms; the lattice itself is
    expressed in the acquisition's own voxel units.
    """
    dims = protocol.matrix_dims
    if any(d < 1 for d in dims):
        raise ValueError("lattice requires positive dims")
    axes = [2.0 * np.pi * (np.arange(n) - n // 2) / n for n in dims]
    lx, ly, lz = np.meshgrid(*axes, indexing="ij")
    return np.stack(
        [lx.ravel(order="F"), ly.ravel(order="F"), lz.ravel(order="F")], axis=1
    )


def rotate_locations(locations, R):
    """Apply l -> R @ l to every location; preserves Euclidean norms."""
    R = check_rotation(R)
    locations = np.asarray(locations, dtype=np.float64)
    return locations @ R.T


def scale_locations(locations, voxel_sizes, ref_voxel_mm):
    """Apply l -> diag(s) @ l with s_i = ref_voxel_mm / voxel_sizes[i].

    Converts radians-per-acquisition-voxel coordinates into radians per
    reference voxel.
    """
    v = np.asarray(voxel_sizes, dtype=np.float64)
    if v.shape != (3,) or np.any(v <= 0) or not (ref_voxel_mm > 0):
        raise ValueError("voxel sizes and reference voxel must be positive")
    s = ref_voxel_mm / v
    return np.asarray(locations, dtype=np.float64) * s
