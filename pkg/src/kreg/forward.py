"""Synthetic ground truth: phantoms, dipole field model, and acquisition.

The susceptibility-to-field map works in the Fourier domain with the
standard dipole kernel D(k) = 1/3 - (k_hat . b0_hat)^2 built on a grid that
accounts for voxel sizes (k_i proportional to index_i / (N_i v_i)). D(0) is
fixed to 0, which makes the forward field DC-free and pins the otherwise
arbitrary susceptibility offset.

Acquisitions are simulated off a higher-resolution master grid: lattice
points of the protocol are mapped to their physical positions in the master
frame (scale by s = v_r/v in the acquisition frame, rotate by R, convert to
master voxel units) and the master's spectrum is evaluated there with the
type-2 NUFFT, so an oblique protocol's data is never a relabeling of
reference-grid data. Measurement noise is circular complex Gaussian from a
seeded Philox counter-based generator: deviation sigma means real and
imaginary parts are each N(0, sigma^2/2), drawn as one (M, 2) block per
echo in echo order.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from ._fft import cfftn, cifftn
from .geometry import rotate_locations, scale_locations, cartesian_kspace_lattice
from .nufft import GriddingConfig, KSpaceSamples, nufft_type2
from .volume import ComplexVolume, Mask, ScalarVolume

__all__ = [
    "GYROMAGNETIC_RATIO_MHZ_PER_T",
    "PhysicsConstants",
    "PhantomPrimitive",
    "SusceptibilityPhantomSpec",
    "DipoleKernel",
    "build_phantom",
    "dipole_kernel",
    "field_from_chi",
    "synth_echoes",
    "simulate_acquisition",
    "add_measurement_noise",
]

# Standard proton value; positive phase accrual convention.
GYROMAGNETIC_RATIO_MHZ_PER_T = 42.576


@dataclass(frozen=True)
class PhysicsConstants:
    field_strength_T: float
    gamma_mhz_per_t: float = GYROMAGNETIC_RATIO_MHZ_PER_T

    def __post_init__(self):
        if not (self.field_strength_T > 0 and self.gamma_mhz_per_t > 0):
            raise ValueError("physics constants must be positive")

    @property
    def rad_per_s_per_ppm(self):
        """Angular frequency per ppm of field offset: 2 pi gamma B0 1e-6."""
        return 2.0 * np.pi * self.gamma_mhz_per_t * 1e6 * self.field_strength_T * 1e-6


_SHAPES = ("sphere", "ellipsoid", "cylinder")


@dataclass(frozen=True)
class PhantomPrimitive:
    """One geometric primitive; later primitives override earlier ones.

    ``radii_vox`` is interpreted per shape: spheres use radii_vox[0];
    ellipsoids use all three as semi-axes; cylinders are z-aligned with
    elliptical cross-section radii_vox[0:2] and half-length radii_vox[2].
    """

    shape: str
    center_vox: tuple
    radii_vox: tuple
    chi_ppm: float
    magnitude: float = 1.0

    def __post_init__(self):
        if self.shape not in _SHAPES:
            raise ValueError(f"shape must be one of {_SHAPES}")
        object.__setattr__(self, "center_vox", tuple(float(c) for c in self.center_vox))
        radii = tuple(float(r) for r in self.radii_vox)
        if len(radii) != 3 or any(r <= 0 for r in radii):
            raise ValueError("radii must be three positive reals")
        object.__setattr__(self, "radii_vox", radii)

    def membership(self, x, y, z):
        cx, cy, cz = self.center_vox
        rx, ry, rz = self.radii_vox
        if self.shape == "sphere":
            return (x - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2 <= rx**2
        if self.shape == "ellipsoid":
            return (
                ((x - cx) / rx) ** 2 + ((y - cy) / ry) ** 2 + ((z - cz) / rz) ** 2
            ) <= 1.0
        return (((x - cx) / rx) ** 2 + ((y - cy) / ry) ** 2 <= 1.0) & (
            np.abs(z - cz) <= rz
        )

    def scaled(self, factor):
        """Same primitive with coordinates and radii scaled by ``factor``."""
        return PhantomPrimitive(
            shape=self.shape,
            center_vox=tuple(c * factor for c in self.center_vox),
            radii_vox=tuple(r * factor for r in self.radii_vox),
            chi_ppm=self.chi_ppm,
            magnitude=self.magnitude,
        )


@dataclass(frozen=True)
class SusceptibilityPhantomSpec:
    primitives: tuple
    background_chi_ppm: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "primitives", tuple(self.primitives))

    def scaled(self, factor):
        return SusceptibilityPhantomSpec(
            primitives=tuple(p.scaled(factor) for p in self.primitives),
            background_chi_ppm=self.background_chi_ppm,
        )


def build_phantom(spec, dims, voxel_sizes=(1.0, 1.0, 1.0)):
    """Voxelize a phantom spec: returns (chi ppm, magnitude, mask).

    The mask is the union of all primitives. A primitive that covers no
    voxel triggers a warning, not an error.
    """
    dims = tuple(int(d) for d in dims)
    if any(d < 16 for d in dims):
        raise ValueError("phantom grids should be at least 16 voxels per axis")
    x, y, z = np.meshgrid(*(np.arange(n, dtype=np.float64) for n in dims), indexing="ij")
    chi = np.full(dims, float(spec.background_chi_ppm))
    mag = np.zeros(dims)
    mask = np.zeros(dims, dtype=bool)
    for i, prim in enumerate(spec.primitives):
        inside = prim.membership(x, y, z)
        if not inside.any():
            warnings.warn(f"primitive {i} ({prim.shape}) covers no voxel", stacklevel=2)
            continue
        chi[inside] = prim.chi_ppm
        mag[inside] = prim.magnitude
        mask |= inside
    return (
        ScalarVolume(dims=dims, voxel_sizes=voxel_sizes, data=chi.ravel(order="F")),
        ScalarVolume(dims=dims, voxel_sizes=voxel_sizes, data=mag.ravel(order="F")),
        Mask(dims=dims, data=mask),
    )


@dataclass(frozen=True)
class DipoleKernel:
    """Fourier-domain dipole kernel on a centered k grid."""

    values: ScalarVolume
    b0_image_frame: tuple


def dipole_kernel(dims, voxel_sizes, b0_img):
    """D(k) = 1/3 - (k_hat . b0_hat)^2 on the centered k lattice.

    ``b0_img`` must be unit length within 1e-9; k components are
    (index - N//2)/(N * v) per axis so anisotropic voxels tilt the kernel
    exactly as the acquisition geometry dictates. D at k = 0 is set to 0.

    On even grids the edge plane holds +Nyquist and -Nyquist at once, so D
    is averaged over k and its lattice negation there; this keeps the
    kernel even and filters of real volumes real.
    """
    b0 = np.asarray(b0_img, dtype=np.float64)
    if b0.shape != (3,) or abs(np.linalg.norm(b0) - 1.0) > 1e-9:
        raise ValueError("b0 must be a unit 3-vector (within 1e-9)")
    dims = tuple(int(d) for d in dims)

    def evaluate(sign):
        axes = []
        for n, v in zip(dims, voxel_sizes):
            f = (np.arange(n) - n // 2) / (n * v)
            if sign < 0:
                # lattice negation: -f wraps the unpaired Nyquist onto itself
                f = -f
                if n % 2 == 0:
                    f[0] = -f[0]
            axes.append(f)
        kx, ky, kz = np.meshgrid(*axes, indexing="ij")
        k2 = kx**2 + ky**2 + kz**2
        dot = kx * b0[0] + ky * b0[1] + kz * b0[2]
        with np.errstate(invalid="ignore", divide="ignore"):
            d = 1.0 / 3.0 - (dot**2) / k2
        return d

    d = 0.5 * (evaluate(+1) + evaluate(-1))
    d[tuple(n // 2 for n in dims)] = 0.0
    vol = ScalarVolume(dims=dims, voxel_sizes=voxel_sizes, data=d.ravel(order="F"))
    return DipoleKernel(values=vol, b0_image_frame=tuple(b0))


def field_from_chi(chi, b0_img):
    """Forward dipole model: field = IFFT(D * FFT(chi)), in ppm.

    Linear in chi; the output mean over the periodic volume is zero by the
    D(0) = 0 convention. The imaginary residue must stay below 1e-10
    relative and is discarded.
    """
    if not isinstance(chi, ScalarVolume):
        raise TypeError("field_from_chi expects a ScalarVolume")
    d = dipole_kernel(chi.dims, chi.voxel_sizes, b0_img).values.data
    spec = cfftn(chi.data.astype(np.float64))
    out = cifftn(d * spec)
    scale = np.linalg.norm(out)
    if scale > 0 and np.linalg.norm(out.imag) > 1e-10 * scale:
        raise ValueError("unexpected imaginary residue in dipole field")
    return ScalarVolume(
        dims=chi.dims, voxel_sizes=chi.voxel_sizes, data=out.real.ravel(order="F")
    )


def synth_echoes(field_ppm, magnitude, echo_times_s, constants):
    """Complex multi-echo signal: magnitude * exp(i * phase_j).

    phase_j = 2 pi gamma B0 field_ppm 1e-6 TE_j; no decay is modeled.
    """
    tes = [float(t) for t in echo_times_s]
    if not tes or any(t <= 0 for t in tes):
        raise ValueError("echo times must be positive")
    if any(b <= a for a, b in zip(tes, tes[1:])):
        raise ValueError("echo times must be ascending")
    if field_ppm.dims != magnitude.dims:
        raise ValueError("field and magnitude dims differ")
    rate = constants.rad_per_s_per_ppm  # rad/s per ppm
    out = []
    for te in tes:
        phase = rate * field_ppm.data * te
        signal = magnitude.data * np.exp(1j * phase)
        out.append(
            ComplexVolume(
                dims=field_ppm.dims,
                voxel_sizes=field_ppm.voxel_sizes,
                data=signal.ravel(order="F"),
                echo_times_s=(te,),
            )
        )
    return out


def _master_locations(protocol, ref, master):
    """Protocol lattice mapped to master-grid frequency units."""
    lattice = cartesian_kspace_lattice(protocol, ref)
    scaled = scale_locations(lattice, protocol.voxel_sizes, ref.iso_voxel_mm)
    physical = rotate_locations(scaled, protocol.rotation)  # rad / reference voxel
    master_vox = np.asarray(master.voxel_sizes, dtype=np.float64)
    return physical * (master_vox / ref.iso_voxel_mm)


def add_measurement_noise(samples_per_echo, noise_sigma, seed):
    """Add seeded circular complex Gaussian noise to per-echo samples.

    One (M, 2) standard-normal block per echo, consumed in echo order from
    a Philox stream keyed by ``seed``; real/imaginary deviations are
    sigma/sqrt(2) so the complex deviation is sigma. Equivalent to passing
    the same sigma and seed to :func:`simulate_acquisition`.
    """
    if noise_sigma < 0:
        raise ValueError("noise sigma must be nonnegative")
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    out = []
    for samples in samples_per_echo:
        values = samples.values
        if noise_sigma > 0:
            draws = rng.standard_normal((values.shape[0], 2))
            values = values + (noise_sigma / np.sqrt(2.0)) * (
                draws[:, 0] + 1j * draws[:, 1]
            )
        out.append(KSpaceSamples(locations=samples.locations, values=values))
    return out


def simulate_acquisition(
    signal_per_echo, protocol, ref, noise_sigma=0.0, seed=0, cfg=None
):
    """Sample each echo's master-grid signal at the protocol's lattice.

    ``signal_per_echo`` lives on the master grid (its voxel-size metadata
    defines the master resolution; the reference FoV must match). Returns
    one KSpaceSamples per echo whose locations are the acquisition lattice
    in radians per acquisition voxel (the registration input convention)
    and whose values are scaled to reference-grid DFT normalization, i.e.
    a master grid equal to the reference grid reproduces the plain centered
    FFT. Identical seeds give bitwise identical outputs.
    """
    cfg = cfg or GriddingConfig()
    if noise_sigma < 0:
        raise ValueError("noise sigma must be nonnegative")
    if not signal_per_echo:
        raise ValueError("at least one echo is required")
    master = signal_per_echo[0]
    for vol in signal_per_echo:
        if vol.dims != master.dims or vol.voxel_sizes != master.voxel_sizes:
            raise ValueError("echo volumes must share the master grid")

    locations = _master_locations(protocol, ref, master)
    lattice = cartesian_kspace_lattice(protocol, ref)
    # Master-voxel DTFT -> reference-voxel normalization (Riemann cell ratio).
    amp = float(np.prod(master.voxel_sizes)) / ref.iso_voxel_mm**3
    out = []
    for vol in signal_per_echo:
        values = nufft_type2(vol, locations, cfg).values * amp
        out.append(KSpaceSamples(locations=lattice, values=values))
    return add_measurement_noise(out, noise_sigma, seed)
