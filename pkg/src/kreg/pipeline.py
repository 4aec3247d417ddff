"""End-to-end three-protocol experiment and report emission.

One run simulates the reference acquisition twice (different seeds) and an
oblique anisotropic acquisition once, then reconstructs four susceptibility
maps from the third dataset's perspective:

* retest   - second reference acquisition, plain recon (noise floor),
* noreg    - oblique grid recon inverted with the oblique-frame dipole,
             then resampled onto the reference grid for comparison,
* ireg     - image-space registration of unwrapped phase + magnitude,
* kreg     - k-space registration.

Every map is scored as NRMSE against the first protocol's map inside the
phantom mask (demeaned, since the susceptibility offset is unobservable).
The report's NRMSE fields are deterministic given the config; stage
timings are provenance only and excluded from the determinism contract.
"""

import time

import numpy as np

from . import __version__
from .forward import (
    PhysicsConstants,
    add_measurement_noise,
    build_phantom,
    field_from_chi,
    simulate_acquisition,
    synth_echoes,
)
from .geometry import b0_in_image_frame
from .qsm import fit_field, nrmse, tkd_invert
from .registration import (
    acquisition_to_reference_affine,
    affine_resample_sinc,
    image_register_baseline,
    kspace_register,
    laplacian_unwrap,
    plain_reconstruction,
)
from .volume import Mask, ScalarVolume, export_slice_pgm, write_vol

__all__ = ["run_pipeline", "qsm_from_complex", "PipelineError"]

B0_REFERENCE = (0.0, 0.0, 1.0)


class PipelineError(RuntimeError):
    """Stage failure; ``stage`` names the failed step."""

    def __init__(self, stage, cause):
        self.stage = stage
        super().__init__(f"pipeline stage '{stage}' failed: {cause}")


SIGNAL_MASK_REL_THRESHOLD = 0.1


def split_magnitude_phase(echo_volumes, mask_threshold=SIGNAL_MASK_REL_THRESHOLD):
    """Magnitude and signal-gated wrapped phase from complex echoes.

    Phase is undefined where the object has no signal (outside the phantom
    it is the angle of pure noise), so the wrapped phase is zeroed below a
    relative magnitude threshold before unwrapping; otherwise the global
    FFT-based unwrap drags exterior noise phase into the interior.
    """
    mean_mag = np.mean([np.abs(vol.data) for vol in echo_volumes], axis=0)
    cut = mask_threshold * float(np.percentile(mean_mag, 99.5))
    signal = mean_mag > cut
    mags, wrapped = [], []
    for vol in echo_volumes:
        mags.append(
            ScalarVolume(
                dims=vol.dims, voxel_sizes=vol.voxel_sizes,
                data=np.abs(vol.data).ravel(order="F"),
            )
        )
        wrapped.append(
            ScalarVolume(
                dims=vol.dims, voxel_sizes=vol.voxel_sizes,
                data=np.where(signal, np.angle(vol.data), 0.0).ravel(order="F"),
            )
        )
    return mags, wrapped


def qsm_from_complex(echo_volumes, echo_times_s, constants, b0_img, tkd_cfg,
                     dipole_voxel_sizes=None):
    """Susceptibility map from complex per-echo volumes.

    Magnitude and wrapped phase are taken from the complex data, the phase
    is Laplacian-unwrapped per echo, the field is fitted across echoes, and
    TKD inverts it with the given image-frame B0 direction.
    """
    mags, wrapped = split_magnitude_phase(echo_volumes)
    phases = [laplacian_unwrap(w) for w in wrapped]
    fit = fit_field(phases, mags, echo_times_s, constants)
    return tkd_invert(fit.field, b0_img, tkd_cfg, voxel_sizes=dipole_voxel_sizes)


def _fit_and_invert(phases, mags, echo_times_s, constants, b0_img, tkd_cfg):
    fit = fit_field(phases, mags, echo_times_s, constants)
    return tkd_invert(fit.field, b0_img, tkd_cfg)


class _Timer:
    def __init__(self):
        self.laps_ms = {}
        self._t0 = time.perf_counter()

    def lap(self, name):
        t1 = time.perf_counter()
        self.laps_ms[name] = round(1000.0 * (t1 - self._t0), 3)
        self._t0 = t1


def run_pipeline(config, out_dir=None, write_outputs=True):
    """Run the three-protocol experiment; returns the report dict."""
    timer = _Timer()
    ref = config.reference
    constants = PhysicsConstants(field_strength_T=config.field_strength_t)
    tes = config.echo_times_s

    def stage(name, fn):
        try:
            result = fn()
        except Exception as exc:
            raise PipelineError(name, exc) from exc
        return result

    # Ground truth on the fine master grid plus its reference-grid voxelization.
    ratio = ref.matrix_dims[0] / config.master_dims[0]
    chi_m, mag_m, _ = stage(
        "phantom",
        lambda: build_phantom(config.phantom, config.master_dims, config.master_voxel_sizes),
    )
    chi_ref, _, mask_ref = stage(
        "phantom",
        lambda: build_phantom(config.phantom.scaled(ratio), ref.matrix_dims, ref.voxel_sizes),
    )
    timer.lap("phantom")

    field_m = stage("forward_field", lambda: field_from_chi(chi_m, B0_REFERENCE))
    echoes_m = stage("synth_echoes", lambda: synth_echoes(field_m, mag_m, tes, constants))
    timer.lap("forward")

    # Simulate each protocol; the noiseless NUFFT pass is cached per geometry
    # so the retest arm reuses the reference acquisition's clean samples.
    descriptors = [config.protocol_descriptor(p) for p in config.protocols]
    clean_cache = {}
    acquisitions = []
    for spec, proto in zip(config.protocols, descriptors):
        key = spec.geometry_key
        if key not in clean_cache:
            clean_cache[key] = stage(
                f"simulate_{spec.name}",
                lambda p=proto: simulate_acquisition(echoes_m, p, ref, 0.0, 0, config.gridding),
            )
        acquisitions.append(
            stage(
                f"simulate_{spec.name}",
                lambda s=spec, k=key: add_measurement_noise(clean_cache[k], s.noise_sigma, s.seed),
            )
        )
    timer.lap("simulate")

    # Arm reconstructions.
    def qsm_reference_grid(echo_vols):
        return qsm_from_complex(echo_vols, tes, constants, B0_REFERENCE, config.tkd)

    chi_p1 = stage(
        "recon_reference",
        lambda: qsm_reference_grid(plain_reconstruction(acquisitions[0], descriptors[0])),
    )
    timer.lap("recon_reference")
    chi_retest = stage(
        "recon_retest",
        lambda: qsm_reference_grid(plain_reconstruction(acquisitions[1], descriptors[1])),
    )
    timer.lap("recon_retest")

    test_spec, test_proto = config.protocols[2], descriptors[2]
    test_samples = acquisitions[2]

    def arm_noreg():
        # The oblique-grid map is aligned for comparison with a high-order
        # resampler: trilinear smoothing here would wash out the tilted-cone
        # artifacts that constitute this arm's protocol bias.
        recon = plain_reconstruction(test_samples, test_proto)
        b0_oblique = tuple(b0_in_image_frame(test_proto.rotation))
        chi_oblique = qsm_from_complex(recon, tes, constants, b0_oblique, config.tkd)
        matrix = acquisition_to_reference_affine(test_proto, ref)
        src_c = np.array([d // 2 for d in test_proto.matrix_dims], dtype=np.float64)
        out_c = np.array([d // 2 for d in ref.matrix_dims], dtype=np.float64)
        resampled, inside = affine_resample_sinc(
            chi_oblique.data, matrix, src_c - matrix @ out_c, ref.matrix_dims
        )
        chi = ScalarVolume(
            dims=ref.matrix_dims, voxel_sizes=ref.voxel_sizes,
            data=resampled.ravel(order="F"),
        )
        return chi, inside

    chi_noreg, inside_noreg = stage("noreg", arm_noreg)
    timer.lap("noreg")

    def arm_ireg():
        recon = plain_reconstruction(test_samples, test_proto)
        mags, wrapped = split_magnitude_phase(recon)
        phases = [laplacian_unwrap(w) for w in wrapped]
        reg_phases, reg_mags, _ = image_register_baseline(phases, mags, test_proto, ref)
        return _fit_and_invert(reg_phases, reg_mags, tes, constants, B0_REFERENCE, config.tkd)

    chi_ireg = stage("ireg", arm_ireg)
    timer.lap("ireg")

    chi_kreg = stage(
        "kreg",
        lambda: qsm_reference_grid(
            kspace_register(test_samples, test_proto, ref, config.gridding)
        ),
    )
    timer.lap("kreg")

    # Shared evaluation mask: phantom support, restricted to reference voxels
    # the oblique volume actually covers.
    eval_mask = Mask(dims=ref.matrix_dims, data=mask_ref.data & inside_noreg)
    arms = {
        "retest": chi_retest,
        "noreg": chi_noreg,
        "ireg": chi_ireg,
        "kreg": chi_kreg,
    }
    scores = stage(
        "nrmse",
        lambda: {name: nrmse(chi, chi_p1, eval_mask, demean=True) for name, chi in arms.items()},
    )
    timer.lap("nrmse")

    outputs = {}
    if write_outputs and out_dir is not None:
        import os

        os.makedirs(out_dir, exist_ok=True)

        def emit(name, writer):
            path = os.path.join(out_dir, name)
            writer(path)
            outputs[name] = path

        cmax = float(np.max(np.abs(chi_ref.data))) or 1.0
        mid = ref.matrix_dims[2] // 2
        emit("chi_truth.kvol", lambda p: write_vol(chi_ref, p))
        emit("chi_reference.kvol", lambda p: write_vol(chi_p1, p))
        for name, chi in arms.items():
            emit(f"chi_{name}.kvol", lambda p, c=chi: write_vol(c, p))
            emit(
                f"qsm_{name}_axial.pgm",
                lambda p, c=chi: export_slice_pgm(c, 2, mid, (-cmax, cmax), p),
            )
            diff = ScalarVolume(
                dims=ref.matrix_dims, voxel_sizes=ref.voxel_sizes,
                data=np.abs(chi.data - chi_p1.data).ravel(order="F"),
            )
            emit(
                f"error_{name}_axial.pgm",
                lambda p, d=diff: export_slice_pgm(d, 2, mid, (0.0, cmax), p),
            )
        emit(
            "qsm_reference_axial.pgm",
            lambda p: export_slice_pgm(chi_p1, 2, mid, (-cmax, cmax), p),
        )
        timer.lap("outputs")

    timer.laps_ms["total"] = round(sum(timer.laps_ms.values()), 3)
    return {
        "schema": 1,
        "tool_version": __version__,
        "nrmse": scores,
        "mask_voxels": eval_mask.count,
        "demeaned": True,
        "noise_sigma": {p.name: p.noise_sigma for p in config.protocols},
        "seeds": {p.name: p.seed for p in config.protocols},
        "config": config.raw,
        "timings_ms": timer.laps_ms,
        "outputs": outputs,
    }
