"""K-space registration onto a reference protocol, plus baselines.

``kspace_register`` realizes the two-step transform: acquired lattice
locations are scaled by s_i = v_r/v_i into reference-voxel units and
rotated by R into the scanner frame, locations falling outside the
reference band [-pi, pi)^3 are discarded (their content would alias), and
the adjoint NUFFT reconstructs directly on the reference grid. No
image-domain interpolation happens anywhere on this path.

The scaling is applied before the rotation: voxel anisotropy lives along
the acquisition axes, so the unit conversion must happen in the
acquisition frame for the composite map R @ diag(s) to place every sample
at its physical position. This composite is exactly inverted by "rotate by
R^T, then scale by 1/s", which is how the acquisition simulator maps
lattice points back into the object frame.

``image_register_baseline`` is the comparison method: it resamples
already-reconstructed (and unwrapped) images onto the reference grid with
trilinear interpolation under the same affine map, which is where its
interpolation error enters.
"""

from dataclasses import dataclass

import numpy as np
from scipy import fft as _sfft

from ._fft import cifftn, get_fft_workers
from .errors import EmptyCoverageError
from .geometry import cartesian_kspace_lattice, rotate_locations, scale_locations
from .nufft import GriddingConfig, KSpaceSamples, nufft_adjoint_type1
from .volume import ComplexVolume, Mask, ScalarVolume

__all__ = [
    "RegistrationPlan",
    "plan_registration",
    "wrap_phase",
    "laplacian_unwrap",
    "kspace_register",
    "plain_reconstruction",
    "image_register_baseline",
    "affine_resample_trilinear",
    "affine_resample_sinc",
    "acquisition_to_reference_affine",
]


def wrap_phase(x):
    """Wrap phase to [-pi, pi); -pi maps to itself, +pi wraps to -pi."""
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("phase must be finite")
    wrapped = np.mod(arr + np.pi, 2.0 * np.pi) - np.pi
    if np.isscalar(x) or arr.ndim == 0:
        return float(wrapped)
    return wrapped


def laplacian_unwrap(wrapped):
    """FFT-based Laplacian phase unwrapping of a ScalarVolume.

    Solves lap(psi) = cos(phi) lap(sin phi) - sin(phi) lap(cos phi) with the
    Laplacian diagonalized by the DFT (spectral -k^2 eigenvalues, periodic
    boundaries). The solve leaves the additive constant undetermined; it is
    fixed by the congruence with the input: the mean of
    wrap(phi - psi) is added, which restores the input's mean exactly when
    the input contains no wraps and recovers the true offset when it does.
    """
    if not isinstance(wrapped, ScalarVolume):
        raise TypeError("laplacian_unwrap expects a ScalarVolume")
    dims = wrapped.dims
    if any(d < 4 for d in dims):
        raise ValueError(f"unwrap requires dims >= 4 per axis, got {dims}")
    phi = wrapped.data.astype(np.float64)
    vox = wrapped.voxel_sizes

    lam = np.zeros(dims)
    for ax in range(3):
        freq = 2.0 * np.pi * _sfft.fftfreq(dims[ax]) / vox[ax]
        shape = [1, 1, 1]
        shape[ax] = dims[ax]
        lam = lam - (freq**2).reshape(shape)

    workers = get_fft_workers()

    def lap(v):
        return np.real(_sfft.ifftn(lam * _sfft.fftn(v, workers=workers), workers=workers))

    sin_phi, cos_phi = np.sin(phi), np.cos(phi)
    rhs = cos_phi * lap(sin_phi) - sin_phi * lap(cos_phi)
    spec = _sfft.fftn(rhs, workers=workers)
    inv = np.zeros(dims)
    nonzero = np.abs(lam) > 1e-12 * np.max(np.abs(lam))
    inv[nonzero] = 1.0 / lam[nonzero]
    psi = np.real(_sfft.ifftn(spec * inv, workers=workers))
    psi += phi.mean() - psi.mean()
    psi += np.mean(wrap_phase(phi - psi))
    return ScalarVolume(
        dims=dims, voxel_sizes=vox, data=psi.ravel(order="F"),
        echo_times_s=wrapped.echo_times_s,
    )


@dataclass(frozen=True)
class RegistrationPlan:
    """Precomputed k-space transform from one protocol onto the reference."""

    protocol: object
    reference: object
    rotation: np.ndarray
    scale_factors: tuple
    locations: np.ndarray  # transformed, radians per reference voxel, (M, 3)
    retained: np.ndarray  # bool (M,), True where inside [-pi, pi)^3
    density_weight: float

    @property
    def n_retained(self):
        return int(self.retained.sum())


def plan_registration(protocol, ref):
    """Build the lattice transform and retained-sample mask for a protocol.

    The transformed lattice stays regular (a rotated, scaled copy), so
    density compensation is a single constant: the per-sample k-space cell
    volume relative to the reference lattice cell,
    prod_i s_i * N_ref_i / N_acq_i. With a shared field of view this is 1.
    """
    lattice = cartesian_kspace_lattice(protocol, ref)
    scaled = scale_locations(lattice, protocol.voxel_sizes, ref.iso_voxel_mm)
    transformed = rotate_locations(scaled, protocol.rotation)
    retained = np.all((transformed >= -np.pi) & (transformed < np.pi), axis=1)
    s = [ref.iso_voxel_mm / v for v in protocol.voxel_sizes]
    weight = 1.0
    for si, n_ref, n_acq in zip(s, ref.matrix_dims, protocol.matrix_dims):
        weight *= si * n_ref / n_acq
    return RegistrationPlan(
        protocol=protocol,
        reference=ref,
        rotation=protocol.rotation,
        scale_factors=tuple(s),
        locations=transformed,
        retained=retained,
        density_weight=weight,
    )


def kspace_register(acquired_per_echo, protocol, ref, cfg=None, plan=None):
    """Reconstruct acquired k-space data on the reference grid, per echo.

    ``acquired_per_echo`` is a sequence of :class:`KSpaceSamples` whose
    values follow the protocol's lattice order (x fastest). The identical
    location transform is applied to every echo; a precomputed ``plan``
    may be supplied to amortize it. Returns a list of ComplexVolume on the
    reference grid.
    """
    cfg = cfg or GriddingConfig()
    if plan is None:
        plan = plan_registration(protocol, ref)
    if plan.n_retained == 0:
        raise EmptyCoverageError(
            "registration discarded every sample; protocols are incompatible"
        )
    keep = plan.retained
    locations = plan.locations[keep]
    weights = np.full(locations.shape[0], plan.density_weight)
    expected = protocol.n_samples
    out = []
    for echo_idx, samples in enumerate(acquired_per_echo):
        if len(samples) != expected:
            raise ValueError(
                f"echo {echo_idx}: {len(samples)} samples, lattice has {expected}"
            )
        kept = KSpaceSamples(locations=locations, values=samples.values[keep])
        img = nufft_adjoint_type1(kept, ref.matrix_dims, cfg, density_weights=weights)
        out.append(
            ComplexVolume(
                dims=ref.matrix_dims,
                voxel_sizes=ref.voxel_sizes,
                data=img.ravel(order="F"),
            )
        )
    return out


def plain_reconstruction(acquired_per_echo, protocol):
    """Unregistered recon: centered inverse FFT on the acquisition grid.

    Sample values must follow the protocol's own lattice (x fastest); this
    is the "none"/no-registration method and the reconstruction used for
    reference-geometry acquisitions.
    """
    lattice = cartesian_kspace_lattice(protocol)
    dims = protocol.matrix_dims
    out = []
    for echo_idx, samples in enumerate(acquired_per_echo):
        if len(samples) != protocol.n_samples:
            raise ValueError(
                f"echo {echo_idx}: {len(samples)} samples, lattice has {protocol.n_samples}"
            )
        if not np.allclose(samples.locations, lattice, atol=1e-12):
            raise ValueError("plain reconstruction requires samples on the lattice")
        grid = samples.values.reshape(dims, order="F")
        img = cifftn(grid)
        tes = protocol.echo_times_s
        out.append(
            ComplexVolume(
                dims=dims,
                voxel_sizes=protocol.voxel_sizes,
                data=img.ravel(order="F"),
                echo_times_s=(tes[echo_idx],) if echo_idx < len(tes) else (),
            )
        )
    return out


def acquisition_to_reference_affine(protocol, ref):
    """Matrix A mapping centered reference indices to centered source indices.

    A reference voxel at centered index x sits at physical position
    v_r * x in the scanner frame; its acquisition-frame index offset is
    diag(1/v) R^T v_r x.
    """
    inv_v = np.diag([1.0 / v for v in protocol.voxel_sizes])
    return inv_v @ protocol.rotation.T * ref.iso_voxel_mm


def _affine_targets(source_dims, matrix, offset, out_dims):
    matrix = np.asarray(matrix, dtype=np.float64)
    grids = np.meshgrid(*(np.arange(n, dtype=np.float64) for n in out_dims), indexing="ij")
    coords = np.stack([g.ravel(order="F") for g in grids], axis=1)
    src = coords @ matrix.T + np.asarray(offset, dtype=np.float64)
    inside = np.all(
        (src >= 0.0) & (src <= np.asarray(source_dims, dtype=np.float64) - 1.0), axis=1
    )
    return src, inside


def affine_resample_trilinear(source, matrix, offset, out_dims):
    """Trilinear pull-back: out(x) = source(matrix @ x + offset).

    ``x`` are raw output indices; positions outside the source index box
    [0, N-1]^3 yield 0 and False in the returned inside-mask.
    """
    source = np.asarray(source)
    dims = source.shape
    src, inside = _affine_targets(dims, matrix, offset, out_dims)
    src_c = np.clip(src, 0.0, np.asarray(dims, dtype=np.float64) - 1.0)
    base = np.minimum(np.floor(src_c).astype(np.intp), np.asarray(dims) - 2)
    base = np.maximum(base, 0)
    frac = src_c - base

    out = np.zeros(src.shape[0], dtype=source.dtype)
    for corner in range(8):
        dx, dy, dz = (corner >> 2) & 1, (corner >> 1) & 1, corner & 1
        w = (
            (frac[:, 0] if dx else 1.0 - frac[:, 0])
            * (frac[:, 1] if dy else 1.0 - frac[:, 1])
            * (frac[:, 2] if dz else 1.0 - frac[:, 2])
        )
        out = out + w * source[base[:, 0] + dx, base[:, 1] + dy, base[:, 2] + dz]
    out[~inside] = 0
    return (
        out.reshape(out_dims, order="F"),
        inside.reshape(out_dims, order="F"),
    )


def affine_resample_sinc(source, matrix, offset, out_dims, taps=8):
    """Truncated-sinc pull-back with sum-normalized taps and periodic wrap.

    Higher-order counterpart of :func:`affine_resample_trilinear`, used when
    an evaluation step must preserve high-frequency content (smoothing it
    would mask the very differences being measured). Not part of the
    image-space registration method, whose contract is trilinear.
    """
    source = np.asarray(source)
    dims = source.shape
    src, inside = _affine_targets(dims, matrix, offset, out_dims)
    idx, wts = [], []
    for ax in range(3):
        t = src[:, ax]
        start = np.ceil(t - taps / 2.0).astype(np.int64)
        pts = start[:, None] + np.arange(taps)[None, :]
        w = np.sinc(pts - t[:, None])
        w = w / w.sum(axis=1, keepdims=True)
        idx.append(np.mod(pts, dims[ax]).astype(np.intp))
        wts.append(w)
    rows = np.arange(src.shape[0])
    out = np.zeros(src.shape[0], dtype=source.dtype)
    for a in range(taps):
        for b in range(taps):
            wab = wts[0][:, a] * wts[1][:, b]
            sub = source[idx[0][:, a], idx[1][:, b], :]
            for c in range(taps):
                out += (wab * wts[2][:, c]) * sub[rows, idx[2][:, c]]
    out[~inside] = 0
    return (
        out.reshape(out_dims, order="F"),
        inside.reshape(out_dims, order="F"),
    )


def image_register_baseline(unwrapped_phase_per_echo, magnitude_per_echo, protocol, ref):
    """Image-space registration baseline: trilinear resampling per echo.

    Takes already-unwrapped phase and magnitude volumes on the acquisition
    grid and pulls both onto the reference grid under the inverse affine
    map (rotation + anisotropic spacing). Returns
    (phase_volumes, magnitude_volumes, inside_mask); voxels that map
    outside the source volume are zero and flagged False in the mask.
    """
    if len(unwrapped_phase_per_echo) != len(magnitude_per_echo):
        raise ValueError("phase and magnitude echo counts differ")
    matrix = acquisition_to_reference_affine(protocol, ref)
    src_center = np.array([d // 2 for d in protocol.matrix_dims], dtype=np.float64)
    out_center = np.array([d // 2 for d in ref.matrix_dims], dtype=np.float64)
    offset = src_center - matrix @ out_center

    phases, magnitudes = [], []
    inside = None
    for phase, mag in zip(unwrapped_phase_per_echo, magnitude_per_echo):
        if phase.dims != mag.dims or phase.dims != protocol.matrix_dims:
            raise ValueError("echo volumes must share the protocol's dims")
        rp, ins = affine_resample_trilinear(phase.data, matrix, offset, ref.matrix_dims)
        rm, _ = affine_resample_trilinear(mag.data, matrix, offset, ref.matrix_dims)
        inside = ins if inside is None else inside
        phases.append(
            ScalarVolume(
                dims=ref.matrix_dims, voxel_sizes=ref.voxel_sizes,
                data=rp.ravel(order="F"), echo_times_s=phase.echo_times_s,
            )
        )
        magnitudes.append(
            ScalarVolume(
                dims=ref.matrix_dims, voxel_sizes=ref.voxel_sizes,
                data=rm.ravel(order="F"), echo_times_s=mag.echo_times_s,
            )
        )
    if inside is None:
        raise ValueError("at least one echo is required")
    return phases, magnitudes, Mask(dims=ref.matrix_dims, data=inside)
