"""Lattice bookkeeping, the linear symbol and spectral constants.

Fields are stored as full complex coefficient arrays of shape ``(N1, N2)`` in
FFT order, normalised so that

    f(x, y) = sum_k fhat[k] * exp(i * (kt1 * x + kt2 * y)),   kt = 2*pi*(k1/L1, k2/L2)

i.e. ``fhat = fft2(f) / (N1 * N2)``.  The resolved lattice is
``-N/2 < k <= N/2`` on each axis; the Nyquist index (``k = N/2``) is kept
zero by every constructor in this package so that conjugate symmetry is
exact.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
import scipy.fft as sfft

__all__ = [
    "TorusSpec",
    "SpectralField",
    "SymbolTable",
    "wavenumbers",
    "sigma_eval",
    "sigma_expanded",
    "build_symbol_table",
    "count_growing_modes",
    "fft_workers",
]


def fft_workers():
    """Worker count for scipy.fft, capped by ``KS2D_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("KS2D_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class TorusSpec:
    """Periods and resolution of the torus ``[0, L1] x [0, L2]``."""

    L1: float
    L2: float
    N1: int
    N2: int

    def __post_init__(self):
        if not (self.L1 > 0 and self.L2 > 0):
            raise ValueError(f"periods must be positive, got L1={self.L1}, L2={self.L2}")
        for name in ("N1", "N2"):
            n = getattr(self, name)
            if int(n) != n or n < 4 or n % 2:
                raise ValueError(f"{name} must be an even integer >= 4, got {n}")

    @property
    def shape(self):
        return (self.N1, self.N2)

    @cached_property
    def k_index(self):
        """Integer lattice indices ``(k1, k2)`` as two ``(N1, N2)`` int arrays.

        The Nyquist row/column carries ``+N/2`` so that the lattice is
        ``-N/2 < k <= N/2``.
        """
        k1 = np.fft.fftfreq(self.N1, 1.0 / self.N1).astype(np.int64)
        k2 = np.fft.fftfreq(self.N2, 1.0 / self.N2).astype(np.int64)
        k1[self.N1 // 2] = self.N1 // 2
        k2[self.N2 // 2] = self.N2 // 2
        K1, K2 = np.meshgrid(k1, k2, indexing="ij")
        K1.setflags(write=False)
        K2.setflags(write=False)
        return K1, K2

    @cached_property
    def ktilde(self):
        """Physical wavenumbers ``2*pi*(k1/L1, k2/L2)`` on the lattice."""
        K1, K2 = self.k_index
        kt1 = 2 * np.pi * K1 / self.L1
        kt2 = 2 * np.pi * K2 / self.L2
        kt1.setflags(write=False)
        kt2.setflags(write=False)
        return kt1, kt2

    @cached_property
    def ktilde_abs(self):
        kt1, kt2 = self.ktilde
        out = np.hypot(kt1, kt2)
        out.setflags(write=False)
        return out

    def k_norm(self, norm="euclidean"):
        """Norm of the integer index used by the Wiener weights and the gap ``A``."""
        K1, K2 = self.k_index
        if norm == "euclidean":
            return np.hypot(K1, K2).astype(float)
        if norm == "l1":
            return (np.abs(K1) + np.abs(K2)).astype(float)
        raise ValueError(f"unknown index norm {norm!r}")

    @cached_property
    def nyquist_mask(self):
        """True on the modes kept by the constructors (everything but Nyquist)."""
        K1, K2 = self.k_index
        m = (K1 != self.N1 // 2) & (K2 != self.N2 // 2)
        m.setflags(write=False)
        return m

    @cached_property
    def dealias_mask(self):
        """2/3-rule mask: keep ``|k_i| < N_i/3`` on both axes."""
        K1, K2 = self.k_index
        m = (3 * np.abs(K1) < self.N1) & (3 * np.abs(K2) < self.N2)
        m.setflags(write=False)
        return m

    @cached_property
    def grid(self):
        """Physical collocation points ``(X, Y)``."""
        x = np.arange(self.N1) * self.L1 / self.N1
        y = np.arange(self.N2) * self.L2 / self.N2
        return np.meshgrid(x, y, indexing="ij")

    def lattice_index(self, k1, k2):
        """Array position of the lattice index ``(k1, k2)``."""
        if not (-self.N1 // 2 < k1 <= self.N1 // 2 and -self.N2 // 2 < k2 <= self.N2 // 2):
            raise IndexError(f"({k1}, {k2}) outside the resolved lattice")
        return (k1 % self.N1, k2 % self.N2)

    # transforms
    def to_physical(self, fhat):
        return sfft.ifft2(fhat, axes=(-2, -1), norm="forward", workers=fft_workers()).real

    def to_spectral(self, f):
        return sfft.fft2(f, axes=(-2, -1), norm="forward", workers=fft_workers())


def _conj_reflect(a):
    """Array ``b`` with ``b[k] = conj(a[-k])`` on the last two axes."""
    return np.conj(np.roll(np.flip(a, axis=(-2, -1)), shift=(1, 1), axis=(-2, -1)))


@dataclass
class SpectralField:
    """Fourier coefficients of the pair ``(u, v)`` on a torus lattice."""

    spec: TorusSpec
    uhat: np.ndarray
    vhat: np.ndarray
    gradient: bool = True

    def __post_init__(self):
        self.uhat = np.asarray(self.uhat, dtype=complex)
        self.vhat = np.asarray(self.vhat, dtype=complex)
        if self.uhat.shape != self.spec.shape or self.vhat.shape != self.spec.shape:
            raise ValueError(
                f"coefficient arrays must have shape {self.spec.shape}, "
                f"got {self.uhat.shape} and {self.vhat.shape}"
            )

    @classmethod
    def zeros(cls, spec, gradient=True):
        return cls(spec, np.zeros(spec.shape, complex), np.zeros(spec.shape, complex), gradient)

    @classmethod
    def from_physical(cls, spec, u, v, gradient=True):
        return cls(spec, spec.to_spectral(u), spec.to_spectral(v), gradient)

    @classmethod
    def from_potential(cls, spec, phihat):
        """Gradient pair ``(u, v) = grad(phi)`` from the potential's coefficients."""
        kt1, kt2 = spec.ktilde
        phihat = np.asarray(phihat, complex) * spec.nyquist_mask
        return cls(spec, 1j * kt1 * phihat, 1j * kt2 * phihat, True)

    def physical(self):
        return self.spec.to_physical(self.uhat), self.spec.to_physical(self.vhat)

    def copy(self):
        return SpectralField(self.spec, self.uhat.copy(), self.vhat.copy(), self.gradient)

    def __add__(self, other):
        return SpectralField(self.spec, self.uhat + other.uhat, self.vhat + other.vhat,
                             self.gradient and other.gradient)

    def __sub__(self, other):
        return SpectralField(self.spec, self.uhat - other.uhat, self.vhat - other.vhat,
                             self.gradient and other.gradient)

    def __mul__(self, c):
        return SpectralField(self.spec, c * self.uhat, c * self.vhat, self.gradient)

    __rmul__ = __mul__

    @property
    def mean(self):
        return self.uhat[0, 0], self.vhat[0, 0]

    def reality_defect(self):
        """Largest ``|fhat(-k) - conj(fhat(k))|`` over both components."""
        return max(
            float(np.max(np.abs(a - _conj_reflect(a)), initial=0.0))
            for a in (self.uhat, self.vhat)
        )

    def curl_defect(self):
        """Relative curl ``max|kt2*u - kt1*v| / max(|u| + |v|)``; 0 for the zero field."""
        kt1, kt2 = self.spec.ktilde
        num = np.max(np.abs(kt2 * self.uhat - kt1 * self.vhat))
        den = np.max(np.abs(self.uhat) + np.abs(self.vhat))
        return float(num / den) if den > 0 else 0.0

    def symmetrized(self):
        """Project onto real fields: ``(fhat + conj(fhat(-k))) / 2``, Nyquist zeroed."""
        m = self.spec.nyquist_mask
        u = 0.5 * (self.uhat + _conj_reflect(self.uhat)) * m
        v = 0.5 * (self.vhat + _conj_reflect(self.vhat)) * m
        return SpectralField(self.spec, u, v, self.gradient)


def wavenumbers(spec):
    """Map ``{(k1, k2): (kt1, kt2)}`` over the resolved lattice."""
    K1, K2 = spec.k_index
    kt1, kt2 = spec.ktilde
    return {
        (int(a), int(b)): (float(c), float(d))
        for a, b, c, d in zip(K1.ravel(), K2.ravel(), kt1.ravel(), kt2.ravel())
    }


def sigma_eval(kt1, kt2=None):
    """Symbol of ``Delta^2 + Delta``: ``|kt|^4 - |kt|^2``.

    Accepts either the two components or a single length-2 sequence.
    """
    if kt2 is None:
        kt1, kt2 = kt1
    q = np.asarray(kt1, float) ** 2 + np.asarray(kt2, float) ** 2
    return q * q - q


def sigma_expanded(k1, k2, L1, L2):
    """Five-term expansion of the symbol in the integer index and the periods."""
    k1 = np.asarray(k1, float)
    k2 = np.asarray(k2, float)
    p2, p4 = np.pi ** 2, np.pi ** 4
    return (
        16 * p4 * k1 ** 4 / L1 ** 4
        + 32 * p4 * k1 ** 2 * k2 ** 2 / (L1 ** 2 * L2 ** 2)
        + 16 * p4 * k2 ** 4 / L2 ** 4
        - 4 * p2 * k1 ** 2 / L1 ** 2
        - 4 * p2 * k2 ** 2 / L2 ** 2
    )


@dataclass(frozen=True)
class SymbolTable:
    """Symbol values and derived constants for one torus.

    Attributes
    ----------
    sigma : ndarray
        ``sigma(kt)`` on the lattice, FFT order.
    growing : list of (k1, k2)
        Modes with ``sigma < 0``, ordered by ``|kt|`` then lexicographically.
    k0 : (k1, k2)
        Nonzero mode whose ``|kt|^2`` is closest to 1/2.
    A : float
        ``max(0, min_{k != 0} sigma(k)/|k|)`` with ``|k|`` the integer-index norm.
    A_raw : float
        The unclamped minimum (negative when growing modes are present).
    """

    spec: TorusSpec
    sigma: np.ndarray
    growing: list
    k0: tuple
    A: float
    A_raw: float
    A_argmin: tuple
    norm: str = "euclidean"
    neutral: list = field(default_factory=list)

    @property
    def has_gap(self):
        return self.A > 0

    @property
    def sigma_min(self):
        return float(self.sigma.min())

    def to_csv(self, path):
        """Write ``k1,k2,ktilde1,ktilde2,sigma`` rows in lattice order."""
        K1, K2 = self.spec.k_index
        kt1, kt2 = self.spec.ktilde
        order = np.lexsort((K2.ravel(), K1.ravel()))
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k1", "k2", "ktilde1", "ktilde2", "sigma"])
            for i in order:
                w.writerow([
                    int(K1.ravel()[i]), int(K2.ravel()[i]),
                    repr(float(kt1.ravel()[i])), repr(float(kt2.ravel()[i])),
                    repr(float(self.sigma.ravel()[i])),
                ])


@lru_cache(maxsize=64)
def build_symbol_table(spec, norm="euclidean"):
    """Symbol, growing modes, ``k0`` and the gap ``A`` (cached per spec and norm)."""
    kt1, kt2 = spec.ktilde
    sigma = sigma_eval(kt1, kt2)
    sigma.setflags(write=False)
    K1, K2 = spec.k_index
    kabs2 = spec.ktilde_abs ** 2
    nonzero = (K1 != 0) | (K2 != 0)

    def ordered(mask):
        idx = np.flatnonzero(mask.ravel())
        keys = sorted(
            (float(kabs2.ravel()[i]), int(K1.ravel()[i]), int(K2.ravel()[i])) for i in idx
        )
        return [(a, b) for _, a, b in keys]

    growing = ordered(sigma < 0)
    neutral = ordered((sigma == 0) & nonzero)

    # k0: |kt|^2 closest to 1/2, tie-break on |kt| then (k1, k2)
    idx = np.flatnonzero(nonzero.ravel())
    k0 = min(
        idx,
        key=lambda i: (abs(float(kabs2.ravel()[i]) - 0.5), float(kabs2.ravel()[i]),
                       int(K1.ravel()[i]), int(K2.ravel()[i])),
    )
    k0 = (int(K1.ravel()[k0]), int(K2.ravel()[k0]))

    knorm = spec.k_norm(norm)
    ratio = np.full(spec.shape, np.inf)
    ratio[nonzero] = sigma[nonzero] / knorm[nonzero]
    i = int(np.argmin(ratio))
    a_raw = float(ratio.ravel()[i])
    a_arg = (int(K1.ravel()[i]), int(K2.ravel()[i]))
    if a_raw > 0 and knorm.ravel()[i] >= min(spec.N1, spec.N2) / 4:
        raise ValueError(
            f"gap minimiser {a_arg} is not well inside the lattice; increase resolution"
        )
    return SymbolTable(
        spec=spec, sigma=sigma, growing=growing, k0=k0, A=max(0.0, a_raw), A_raw=a_raw,
        A_argmin=a_arg, norm=norm, neutral=neutral,
    )


def count_growing_modes(spec):
    return len(build_symbol_table(spec).growing)
