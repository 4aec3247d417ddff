"""Gridding NUFFT: type-2 (image -> arbitrary k locations) and its adjoint.

Both operators share one pipeline built around a 2x-oversampled centered
FFT and Kaiser-Bessel interpolation:

* type-2: divide by the kernel's image response (deapodize), zero-pad to
  ``osf * N`` centered, FFT, gather at each location with the KB kernel.
* type-1 adjoint: scatter weighted samples with the same kernel, inverse
  FFT, crop, deapodize, and scale by 1/(N_x*N_y*N_z).

With that normalization a full uniform lattice with unit weights inverts
type-2, and the pair are exact numerical adjoints up to the documented
1/prod(N) factor on type-1.

Locations are radians per voxel of the target grid; every component must
lie in [-pi, pi). The DFT being approximated is centered: voxel (i, j, k)
sits at integer offsets (i - N_x//2, j - N_y//2, k - N_z//2).

Accuracy at the defaults (W = 7, osf = 2, Beatty beta) is ~1e-6 relative
against the direct DFT; W = 6 still reaches ~6e-6 away from the exact
lattice but its on-lattice coherent aliasing sits just under 2e-5, which is
why 7 is the shipped default.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import gridding
from ._fft import cfftn, cifftn
from .errors import NumericalError, OutOfBandError
from .gridding import kb_kernel
from .volume import ComplexVolume

__all__ = [
    "GriddingConfig",
    "KSpaceSamples",
    "beatty_beta",
    "kb_kernel",
    "nufft_type2",
    "nufft_adjoint_type1",
    "deapodize",
    "apodization_profile",
]

DEFAULT_KERNEL_WIDTH = 7
DEFAULT_OVERSAMPLING = 2.0


def beatty_beta(width, osf):
    """Beatty shape parameter: pi * sqrt((W/osf)^2 (osf - 1/2)^2 - 0.8)."""
    if width < 2:
        raise ValueError("kernel width must be >= 2")
    if not osf > 1:
        raise ValueError("oversampling factor must exceed 1")
    under = (width / osf) ** 2 * (osf - 0.5) ** 2 - 0.8
    if under <= 0:
        raise ValueError(f"beta expression under sqrt is nonpositive ({under:.6g})")
    return math.pi * math.sqrt(under)


@dataclass(frozen=True)
class GriddingConfig:
    """Kernel width, oversampling factor, and KB beta for both operators."""

    kernel_width: int = DEFAULT_KERNEL_WIDTH
    oversampling_factor: float = DEFAULT_OVERSAMPLING
    beta: float = None

    def __post_init__(self):
        if self.kernel_width < 2:
            raise ValueError("kernel width must be >= 2")
        if not self.oversampling_factor > 1:
            raise ValueError("oversampling factor must exceed 1")
        if self.beta is None:
            object.__setattr__(
                self, "beta", beatty_beta(self.kernel_width, self.oversampling_factor)
            )
        if not self.beta > 0:
            raise ValueError("beta must be positive")

    def padded_dims(self, dims):
        return tuple(int(round(self.oversampling_factor * d)) for d in dims)


@dataclass(frozen=True)
class KSpaceSamples:
    """Nonuniform Fourier samples: (M, 3) locations paired with M values."""

    locations: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        loc = np.asarray(self.locations, dtype=np.float64)
        val = np.asarray(self.values, dtype=np.complex128)
        if loc.ndim != 2 or loc.shape[1] != 3:
            raise ValueError("locations must be an (M, 3) array")
        if val.shape != (loc.shape[0],):
            raise ValueError("values length must match locations")
        loc.flags.writeable = False
        val.flags.writeable = False
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "values", val)

    def __len__(self):
        return self.locations.shape[0]


def _check_band(locations):
    locations = np.asarray(locations, dtype=np.float64)
    bad = np.count_nonzero(
        np.any((locations < -np.pi) | (locations >= np.pi), axis=1)
    )
    if bad:
        raise OutOfBandError(bad, band=np.pi)
    return locations


def apodization_profile(n, padded, cfg):
    """Image response of the KB kernel along one axis, length ``n``.

    Gauss-Legendre evaluation of the kernel's Fourier integral
    c(x) = int kb(u) cos(2 pi u x / G) du at centered offsets x = i - n//2;
    the integrand is analytic so 80 nodes are exact to double precision.
    """
    nodes, wts = np.polynomial.legendre.leggauss(80)
    half = cfg.kernel_width / 2.0
    u = nodes * half
    q = wts * half * kb_kernel(u, cfg.kernel_width, cfg.beta)
    x = np.arange(n) - n // 2
    prof = np.cos(2.0 * np.pi * np.outer(x, u) / padded) @ q
    if np.any(np.abs(prof) < 1e-12):
        raise NumericalError("apodization correction vanishes; widen the kernel")
    return prof


def _apodization_3d(dims, cfg):
    gdims = cfg.padded_dims(dims)
    px, py, pz = (apodization_profile(dims[i], gdims[i], cfg) for i in range(3))
    return px[:, None, None] * py[None, :, None] * pz[None, None, :]


def deapodize(image, cfg=None):
    """Divide an image by the separable kernel correction profile.

    The profile is globally normalized so the center voxel's correction
    factor is exactly 1.
    """
    cfg = cfg or GriddingConfig()
    corr = _apodization_3d(image.dims, cfg)
    center = tuple(d // 2 for d in image.dims)
    corr = corr / corr[center]
    return ComplexVolume(
        dims=image.dims,
        voxel_sizes=image.voxel_sizes,
        data=(image.data / corr).ravel(order="F"),
        echo_times_s=image.echo_times_s,
    )


def _pad_slices(dims, gdims):
    return tuple(
        slice((g - n) // 2, (g - n) // 2 + n) for n, g in zip(dims, gdims)
    )


def nufft_type2(image, locations, cfg=None):
    """Evaluate sum_x image(x) * exp(-i l . x) at each location.

    ``image`` is a ComplexVolume (or bare complex array); ``locations`` is
    (M, 3) in radians per voxel with every component in [-pi, pi).
    """
    cfg = cfg or GriddingConfig()
    data = image.data if isinstance(image, ComplexVolume) else np.asarray(image)
    dims = data.shape
    if any(d < cfg.kernel_width for d in dims):
        raise ValueError(f"image dims {dims} must be >= kernel width {cfg.kernel_width}")
    locations = _check_band(locations)

    gdims = cfg.padded_dims(dims)
    work = data.astype(np.complex128) / _apodization_3d(dims, cfg)
    padded = np.zeros(gdims, dtype=np.complex128)
    padded[_pad_slices(dims, gdims)] = work
    spectrum = np.ascontiguousarray(cfftn(padded))

    plan = gridding.make_plan(locations, gdims, cfg.kernel_width, cfg.beta)
    values = gridding.interpolate(spectrum, plan)
    return KSpaceSamples(locations=locations, values=values)


def nufft_adjoint_type1(samples, dims, cfg=None, density_weights=None, normalize=True):
    """Accumulate sum_j w_j s_j exp(+i l_j . x) onto a uniform grid.

    Returns an array shaped ``dims``. With ``normalize`` (the default) the
    result carries 1/(N_x*N_y*N_z), fixed so that a full uniform lattice
    with unit weights inverts :func:`nufft_type2`; without it the operator
    is the exact adjoint of type-2.
    """
    cfg = cfg or GriddingConfig()
    dims = tuple(int(d) for d in dims)
    values = samples.values
    locations = _check_band(samples.locations)
    if density_weights is not None:
        density_weights = np.asarray(density_weights, dtype=np.float64)
        if density_weights.shape != (len(samples),):
            raise ValueError("density weights length must match sample count")
        values = values * density_weights

    gdims = cfg.padded_dims(dims)
    plan = gridding.make_plan(locations, gdims, cfg.kernel_width, cfg.beta)
    grid = gridding.spread(values, plan, gdims)
    big = cifftn(grid) * float(np.prod(gdims))
    img = big[_pad_slices(dims, gdims)] / _apodization_3d(dims, cfg)
    if normalize:
        img = img / float(np.prod(dims))
    return img
