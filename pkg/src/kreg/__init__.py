"""kreg: k-space registration toolkit for quantitative susceptibility mapping.

Removes acquisition-protocol biases (oblique angulation, anisotropic
resolution) by resampling k-space coordinates onto a reference protocol and
reconstructing with a gridding NUFFT, validated end to end on synthetic
susceptibility phantoms.
"""

__version__ = "0.1.0"

from ._fft import set_fft_workers
from .geometry import (
    ProtocolDescriptor,
    ReferenceProtocol,
    b0_in_image_frame,
    cartesian_kspace_lattice,
    rotation_from_euler,
    rotate_locations,
    scale_locations,
)
from .nufft import (
    GriddingConfig,
    KSpaceSamples,
    beatty_beta,
    deapodize,
    kb_kernel,
    nufft_adjoint_type1,
    nufft_type2,
)
from .registration import (
    image_register_baseline,
    kspace_register,
    laplacian_unwrap,
    plain_reconstruction,
    wrap_phase,
)
from .volume import (
    ComplexVolume,
    Mask,
    ScalarVolume,
    export_slice_pgm,
    read_vol,
    sphere_mask,
    write_vol,
)

__all__ = [
    "__version__",
    "set_fft_workers",
    "ProtocolDescriptor",
    "ReferenceProtocol",
    "b0_in_image_frame",
    "cartesian_kspace_lattice",
    "rotation_from_euler",
    "rotate_locations",
    "scale_locations",
    "GriddingConfig",
    "KSpaceSamples",
    "beatty_beta",
    "deapodize",
    "kb_kernel",
    "nufft_adjoint_type1",
    "nufft_type2",
    "image_register_baseline",
    "kspace_register",
    "laplacian_unwrap",
    "plain_reconstruction",
    "wrap_phase",
    "ComplexVolume",
    "Mask",
    "ScalarVolume",
    "export_slice_pgm",
    "read_vol",
    "sphere_mask",
    "write_vol",
]
