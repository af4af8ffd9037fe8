"""Binary spectra snapshots.

Layout (little-endian)::

    int32 N1, int32 N2, float64 L1, float64 L2, float64 t
    then, for every array position (i, j) in C order of the (N1, N2)
    coefficient array (FFT ordering of the lattice):
        float64 Re uhat, Im uhat, Re vhat, Im vhat

A file therefore has ``32 + 32 * N1 * N2`` bytes.
"""

from __future__ import annotations

import os

import numpy as np

from .spectral import SpectralField, TorusSpec

__all__ = ["write_spectra", "read_spectra", "spectra_size", "HEADER"]

HEADER = np.dtype([("N1", "<i4"), ("N2", "<i4"), ("L1", "<f8"), ("L2", "<f8"), ("t", "<f8")])


def spectra_size(N1, N2):
    return HEADER.itemsize + 32 * N1 * N2


def write_spectra(path, f, t):
    spec = f.spec
    head = np.array([(spec.N1, spec.N2, spec.L1, spec.L2, t)], dtype=HEADER)
    body = np.empty(spec.shape + (4,), "<f8")
    body[..., 0] = f.uhat.real
    body[..., 1] = f.uhat.imag
    body[..., 2] = f.vhat.real
    body[..., 3] = f.vhat.imag
    with open(path, "wb") as fh:
        fh.write(head.tobytes())
        fh.write(body.tobytes())
    return os.path.getsize(path)


def read_spectra(path, gradient=True):
    """Return ``(SpectralField, t)`` from a snapshot file."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < HEADER.itemsize:
        raise ValueError(f"{path}: truncated header")
    head = np.frombuffer(raw[: HEADER.itemsize], dtype=HEADER)[0]
    N1, N2 = int(head["N1"]), int(head["N2"])
    if len(raw) != spectra_size(N1, N2):
        raise ValueError(f"{path}: expected {spectra_size(N1, N2)} bytes, found {len(raw)}")
    spec = TorusSpec(float(head["L1"]), float(head["L2"]), N1, N2)
    body = np.frombuffer(raw[HEADER.itemsize:], dtype="<f8").reshape(N1, N2, 4)
    uhat = body[..., 0] + 1j * body[..., 1]
    vhat = body[..., 2] + 1j * body[..., 3]
    return SpectralField(spec, uhat, vhat, gradient), float(head["t"])
