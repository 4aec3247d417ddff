"""Centered FFT helpers with a process-wide worker-count setting.

All spectra in this package use the centered convention: index ``n - N//2``
is the spatial/frequency coordinate, so the zero coordinate sits at ``N//2``
along every axis. ``cfftn``/``cifftn`` wrap the shift bookkeeping once so the
rest of the code never calls fftshift directly.

The worker count only distributes independent 1-D transforms across threads;
results are bitwise identical for any setting.
"""

import os

import numpy as np
from scipy import fft as _fft

_workers = 1


def set_fft_workers(n=None):
    """Set the FFT worker count (``None`` reads KREG_THREADS, default 1)."""
    global _workers
    if n is None:
        n = int(os.environ.get("KREG_THREADS", "1"))
    _workers = max(1, int(n))


def get_fft_workers():
    return _workers


def cfftn(x):
    """Centered forward DFT: both domains indexed by ``n - N//2``."""
    return _fft.fftshift(_fft.fftn(_fft.ifftshift(x), workers=_workers))


def cifftn(x):
    """Centered inverse DFT (carries the 1/prod(N) factor)."""
    return _fft.fftshift(_fft.ifftn(_fft.ifftshift(x), workers=_workers))


def centered_freqs(n):
    """Per-axis frequencies 2*pi*(k - n//2)/n in radians per sample."""
    return 2.0 * np.pi * (np.arange(n) - n // 2) / n
