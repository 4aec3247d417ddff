"""Command-line interface.

Subcommands::

    kreg phantom  --config C [--out DIR]
    kreg simulate --config C [--out DIR] [--seed S] [--threads N]
    kreg register --config C [--out DIR] --method kreg|ireg|none [--threads N]
    kreg qsm      --config C [--out DIR] --method kreg|ireg|none [--threads N]
    kreg compare  CHI_A CHI_B --mask MASK [--no-demean]
    kreg pipeline --config C [--out DIR] [--threads N]

Exit codes: 0 success, 2 configuration/usage error, 3 I/O error,
4 numerical failure. ``--threads`` (or the KREG_THREADS environment
variable) sets the FFT worker count; results are bitwise independent of
it. ``--seed B`` on simulate overrides protocol seeds with B, B+1, B+2.
"""

import argparse
import glob
import json
import os
import sys

import numpy as np

from . import __version__
from ._fft import set_fft_workers
from .config import ConfigError, default_config_dict, load_config
from .errors import EmptyCoverageError, FormatError, NumericalError, OutOfBandError
from .forward import (
    PhysicsConstants,
    build_phantom,
    field_from_chi,
    simulate_acquisition,
    synth_echoes,
)
from .geometry import b0_in_image_frame, cartesian_kspace_lattice
from .nufft import KSpaceSamples
from .pipeline import (
    PipelineError,
    qsm_from_complex,
    run_pipeline,
    split_magnitude_phase,
)
from .qsm import nrmse
from .registration import (
    image_register_baseline,
    kspace_register,
    laplacian_unwrap,
    plain_reconstruction,
)
from .volume import ComplexVolume, Mask, ScalarVolume, read_vol, write_vol

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4


class CliError(Exception):
    def __init__(self, code, message):
        self.code = code
        super().__init__(message)


def _load(args):
    try:
        return load_config(args.config)
    except ConfigError as exc:
        raise CliError(EXIT_CONFIG, f"config error: {exc}") from exc
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read config: {exc}") from exc


def _out_dir(args, config):
    out = args.out or config.output_dir
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot create output directory: {exc}") from exc
    return out


def _samples_path(out, protocol_name, echo):
    return os.path.join(out, f"kspace_{protocol_name}_echo{echo}.kvol")


def _write_vol_checked(volume, path):
    try:
        write_vol(volume, path)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {path}: {exc}") from exc


def cmd_phantom(args):
    config = _load(args)
    out = _out_dir(args, config)
    if not config.phantom.primitives:
        print("warning: phantom has no primitives; susceptibility is all zero",
              file=sys.stderr)
    chi, mag, mask = build_phantom(
        config.phantom, config.master_dims, config.master_voxel_sizes
    )
    mask_vol = ScalarVolume(
        dims=mask.dims, voxel_sizes=config.master_voxel_sizes,
        data=mask.data.astype(np.float32).ravel(order="F"),
    )
    for name, vol in (("phantom_chi", chi), ("phantom_magnitude", mag), ("phantom_mask", mask_vol)):
        _write_vol_checked(vol, os.path.join(out, f"{name}.kvol"))
    print(f"wrote phantom volumes ({'x'.join(map(str, config.master_dims))}) to {out}")
    return EXIT_OK


def cmd_simulate(args):
    config = _load(args)
    out = _out_dir(args, config)
    constants = PhysicsConstants(field_strength_T=config.field_strength_t)
    chi, mag, _ = build_phantom(config.phantom, config.master_dims, config.master_voxel_sizes)
    field = field_from_chi(chi, (0.0, 0.0, 1.0))
    echoes = synth_echoes(field, mag, config.echo_times_s, constants)
    for idx, spec in enumerate(config.protocols):
        proto = config.protocol_descriptor(spec)
        seed = spec.seed if args.seed is None else args.seed + idx
        samples = simulate_acquisition(
            echoes, proto, config.reference, spec.noise_sigma, seed, config.gridding
        )
        for echo, s in enumerate(samples):
            vol = ComplexVolume(
                dims=proto.matrix_dims,
                voxel_sizes=proto.voxel_sizes,
                data=s.values,
                echo_times_s=(config.echo_times_s[echo],),
            )
            _write_vol_checked(vol, _samples_path(out, spec.name, echo))
    print(f"wrote k-space data for {len(config.protocols)} protocols to {out}")
    return EXIT_OK


def _read_protocol_samples(config, out, spec):
    proto = config.protocol_descriptor(spec)
    lattice = cartesian_kspace_lattice(proto)
    samples = []
    for echo in range(len(config.echo_times_s)):
        path = _samples_path(out, spec.name, echo)
        if not os.path.exists(path):
            raise CliError(EXIT_CONFIG, f"missing echo file {path}; run 'kreg simulate' first")
        try:
            vol = read_vol(path)
        except FormatError as exc:
            raise CliError(EXIT_IO, f"bad echo file {path}: {exc}") from exc
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot read {path}: {exc}") from exc
        if vol.dims != proto.matrix_dims:
            raise CliError(
                EXIT_CONFIG,
                f"{path}: dims {vol.dims} do not match protocol {proto.matrix_dims}",
            )
        samples.append(KSpaceSamples(locations=lattice, values=vol.flat()))
    return proto, samples


def _test_protocol(config, name=None):
    if name is None:
        return config.protocols[2]
    for spec in config.protocols:
        if spec.name == name:
            return spec
    raise CliError(EXIT_CONFIG, f"no protocol named {name!r} in config")


def _registered_volumes(config, out, spec, method):
    proto, samples = _read_protocol_samples(config, out, spec)
    if method == "kreg":
        return kspace_register(samples, proto, config.reference, config.gridding), config.reference.voxel_sizes
    if method == "none":
        return plain_reconstruction(samples, proto), proto.voxel_sizes
    # ireg: reconstruct, unwrap, resample phase and magnitude, recombine.
    recon = plain_reconstruction(samples, proto)
    mags, wrapped = split_magnitude_phase(recon)
    phases = [laplacian_unwrap(w) for w in wrapped]
    reg_p, reg_m, _ = image_register_baseline(phases, mags, proto, config.reference)
    combined = []
    for echo, (p, m) in enumerate(zip(reg_p, reg_m)):
        combined.append(
            ComplexVolume(
                dims=p.dims, voxel_sizes=p.voxel_sizes,
                data=(m.data * np.exp(1j * p.data)).ravel(order="F"),
                echo_times_s=(config.echo_times_s[echo],),
            )
        )
    return combined, config.reference.voxel_sizes


def cmd_register(args):
    config = _load(args)
    out = _out_dir(args, config)
    spec = _test_protocol(config, args.protocol)
    volumes, _ = _registered_volumes(config, out, spec, args.method)
    for echo, vol in enumerate(volumes):
        path = os.path.join(out, f"registered_{args.method}_{spec.name}_echo{echo}.kvol")
        _write_vol_checked(vol, path)
    print(f"wrote {len(volumes)} registered volumes (method={args.method}) to {out}")
    return EXIT_OK


def cmd_qsm(args):
    config = _load(args)
    out = _out_dir(args, config)
    spec = _test_protocol(config, args.protocol)
    proto = config.protocol_descriptor(spec)
    constants = PhysicsConstants(field_strength_T=config.field_strength_t)

    volumes = []
    for echo in range(len(config.echo_times_s)):
        path = os.path.join(out, f"registered_{args.method}_{spec.name}_echo{echo}.kvol")
        if not os.path.exists(path):
            raise CliError(EXIT_CONFIG, f"missing registered volume {path}; run 'kreg register'")
        try:
            volumes.append(read_vol(path))
        except (FormatError, OSError) as exc:
            raise CliError(EXIT_IO, f"cannot read {path}: {exc}") from exc

    if args.method == "none":
        b0 = tuple(b0_in_image_frame(proto.rotation))
    else:
        b0 = (0.0, 0.0, 1.0)
    chi = qsm_from_complex(volumes, config.echo_times_s, constants, b0, config.tkd)
    path = os.path.join(out, f"chi_{args.method}_{spec.name}.kvol")
    _write_vol_checked(chi, path)
    print(f"wrote susceptibility map to {path}")
    return EXIT_OK


def cmd_compare(args):
    try:
        a = read_vol(args.chi_a)
        b = read_vol(args.chi_b)
        mask_vol = read_vol(args.mask)
    except FormatError as exc:
        raise CliError(EXIT_IO, f"bad volume file: {exc}") from exc
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read volume: {exc}") from exc
    if not isinstance(a, ScalarVolume) or not isinstance(b, ScalarVolume):
        raise CliError(EXIT_CONFIG, "compare expects real (scalar) susceptibility volumes")
    mask = Mask(dims=mask_vol.dims, data=mask_vol.data > 0.5)
    try:
        value = nrmse(a, b, mask, demean=not args.no_demean)
    except ValueError as exc:
        raise CliError(EXIT_NUMERICAL, f"cannot compare: {exc}") from exc
    print(json.dumps({"nrmse": value, "mask_voxels": mask.count,
                      "demeaned": not args.no_demean}, indent=2))
    return EXIT_OK


def cmd_pipeline(args):
    config = _load(args)
    out = _out_dir(args, config)
    try:
        report = run_pipeline(config, out_dir=out)
    except PipelineError as exc:
        cause = exc.__cause__
        if isinstance(cause, (OSError,)):
            raise CliError(EXIT_IO, str(exc)) from exc
        raise CliError(EXIT_NUMERICAL, str(exc)) from exc
    text = json.dumps(report, indent=2)
    report_path = os.path.join(out, "report.json")
    try:
        with open(report_path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write report: {exc}") from exc
    print(text)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="kreg",
        description="K-space registration toolkit for quantitative susceptibility mapping",
    )
    parser.add_argument("--version", action="version", version=f"kreg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, method=False, seed=False):
        p.add_argument("--config", required=True, help="path to JSON experiment config")
        p.add_argument("--out", default=None, help="output directory (default from config)")
        p.add_argument("--threads", type=int, default=None,
                       help="FFT worker threads (default KREG_THREADS or 1)")
        if method:
            p.add_argument("--method", choices=("kreg", "ireg", "none"), default="kreg")
            p.add_argument("--protocol", default=None,
                           help="protocol name from the config (default: the test protocol)")
        if seed:
            p.add_argument("--seed", type=int, default=None,
                           help="override protocol seeds with SEED, SEED+1, ...")

    common(sub.add_parser("phantom", help="write phantom chi/magnitude/mask volumes"))
    common(sub.add_parser("simulate", help="simulate k-space acquisitions"), seed=True)
    common(sub.add_parser("register", help="register acquired k-space data"), method=True)
    common(sub.add_parser("qsm", help="reconstruct susceptibility from registered data"),
           method=True)
    common(sub.add_parser("pipeline", help="run the full three-protocol experiment"))

    cmp_p = sub.add_parser("compare", help="NRMSE between two susceptibility volumes")
    cmp_p.add_argument("chi_a")
    cmp_p.add_argument("chi_b")
    cmp_p.add_argument("--mask", required=True)
    cmp_p.add_argument("--no-demean", action="store_true")
    cmp_p.add_argument("--threads", type=int, default=None)
    return parser


_COMMANDS = {
    "phantom": cmd_phantom,
    "simulate": cmd_simulate,
    "register": cmd_register,
    "qsm": cmd_qsm,
    "compare": cmd_compare,
    "pipeline": cmd_pipeline,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    set_fft_workers(args.threads)
    try:
        return _COMMANDS[args.command](args)
    except CliError as exc:
        print(f"kreg: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"kreg: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OutOfBandError, EmptyCoverageError, NumericalError) as exc:
        print(f"kreg: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"kreg: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"kreg: invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
