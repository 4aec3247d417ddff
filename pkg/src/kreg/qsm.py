"""Inverse chain: multi-echo field fitting, TKD inversion, and metrics."""

from dataclasses import dataclass

import numpy as np

from ._fft import cfftn, cifftn
from .forward import dipole_kernel
from .volume import Mask, ScalarVolume

__all__ = ["FieldFitResult", "TkdConfig", "fit_field", "tkd_invert", "nrmse"]


@dataclass(frozen=True)
class FieldFitResult:
    field: ScalarVolume  # ppm
    residual: ScalarVolume  # rad rms across echoes; -1 flags zero-weight voxels


@dataclass(frozen=True)
class TkdConfig:
    """Threshold for k-space division, in (0, 2/3)."""

    threshold: float = 0.2

    def __post_init__(self):
        if not (0.0 < self.threshold < 2.0 / 3.0):
            raise ValueError("TKD threshold must lie in (0, 2/3)")


def fit_field(unwrapped_phase_per_echo, magnitude_per_echo, echo_times_s, constants):
    """Per-voxel weighted least-squares field from multi-echo phase.

    Slope through the origin with weights w_j = magnitude_j^2:
    nu(x) = sum w_j TE_j phi_j / sum w_j TE_j^2 (rad/s), converted to ppm
    with 2 pi gamma B0 1e-6. Voxels with zero total weight get field 0 and
    residual -1.
    """
    tes = [float(t) for t in echo_times_s]
    if not tes or len(unwrapped_phase_per_echo) != len(tes):
        raise ValueError("need one echo time per phase volume, at least one echo")
    if len(magnitude_per_echo) != len(tes):
        raise ValueError("need one magnitude volume per echo")
    dims = unwrapped_phase_per_echo[0].dims
    vox = unwrapped_phase_per_echo[0].voxel_sizes
    num = np.zeros(dims)
    den = np.zeros(dims)
    for phase, mag, te in zip(unwrapped_phase_per_echo, magnitude_per_echo, tes):
        if phase.dims != dims or mag.dims != dims:
            raise ValueError("echo volumes must share dims")
        if np.any(mag.data < 0):
            raise ValueError("magnitudes must be nonnegative")
        w = mag.data.astype(np.float64) ** 2
        num += w * te * phase.data
        den += w * te * te
    ok = den > 0
    nu = np.zeros(dims)
    nu[ok] = num[ok] / den[ok]

    rss = np.zeros(dims)
    for phase, _, te in zip(unwrapped_phase_per_echo, magnitude_per_echo, tes):
        rss += (phase.data - nu * te) ** 2
    residual = np.sqrt(rss / len(tes))
    residual[~ok] = -1.0

    field = np.zeros(dims)
    field[ok] = nu[ok] / constants.rad_per_s_per_ppm
    return FieldFitResult(
        field=ScalarVolume(dims=dims, voxel_sizes=vox, data=field.ravel(order="F")),
        residual=ScalarVolume(dims=dims, voxel_sizes=vox, data=residual.ravel(order="F")),
    )


def tkd_invert(field, b0_img, cfg=None, voxel_sizes=None):
    """Threshold k-space division of a field map (ppm) into chi (ppm).

    chi_hat(k) = F(field)(k) / D(k) where |D(k)| > threshold, otherwise
    F(field)(k) / (threshold * sign(D(k))) with sign(0) = +1. The real part
    of the inverse transform is returned.
    """
    cfg = cfg or TkdConfig()
    if not isinstance(field, ScalarVolume):
        raise TypeError("tkd_invert expects a ScalarVolume field map")
    vox = voxel_sizes if voxel_sizes is not None else field.voxel_sizes
    d = dipole_kernel(field.dims, vox, b0_img).values.data
    delta = cfg.threshold
    sign = np.where(d >= 0.0, 1.0, -1.0)  # sign(0) = +1
    denom = np.where(np.abs(d) > delta, d, delta * sign)
    spec = cfftn(field.data.astype(np.float64))
    chi = np.real(cifftn(spec / denom))
    return ScalarVolume(
        dims=field.dims, voxel_sizes=field.voxel_sizes, data=chi.ravel(order="F")
    )


def nrmse(x, ref, mask, demean=True):
    """||x - ref||_2 / ||ref||_2 over masked voxels.

    With ``demean`` each volume's mask-mean is subtracted first, matching
    the unobservable susceptibility offset under the D(0) = 0 convention.
    """
    if x.dims != ref.dims or (isinstance(mask, Mask) and mask.dims != x.dims):
        raise ValueError("volume and mask dims must match")
    sel = mask.data if isinstance(mask, Mask) else np.asarray(mask, dtype=bool)
    if not sel.any():
        raise ValueError("mask selects no voxels")
    xv = x.data[sel].astype(np.float64)
    rv = ref.data[sel].astype(np.float64)
    if demean:
        xv = xv - xv.mean()
        rv = rv - rv.mean()
    denom = np.linalg.norm(rv)
    if denom == 0:
        raise ValueError("reference has zero norm over the mask")
    return float(np.linalg.norm(xv - rv) / denom)
