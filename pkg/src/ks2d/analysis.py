"""Norms, smallness thresholds, analyticity-radius fits and the continuation monitor.

Conventions
-----------
* Wiener weights use the norm of the *integer* index ``|k|`` (Euclidean by
  default, ``norm="l1"`` available); both components are summed.
* L2 and Sobolev norms are coefficient sums (Parseval with the mean-square
  normalisation of ``fhat``), so ``||f||_{L2}^2 = sum_k |uhat|^2 + |vhat|^2``.
* The radius estimator works in physical wavenumbers ``|kt|``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import optimize

from .linear import I_norm_bound, smoothing_constant
from .spectral import TorusSpec, build_symbol_table

__all__ = [
    "wiener_norm",
    "scalar_wiener_norm",
    "convolve",
    "spacetime_alpha_norm",
    "sobolev_norm",
    "l2_norm",
    "RadiusEstimate",
    "analyticity_radius_estimate",
    "NormSeries",
    "ThresholdReport",
    "thresholds",
    "strip_halfwidth",
    "calibrated_constant",
    "short_time_horizon",
    "first_condition_alpha",
    "ContinuationVerdict",
    "continuation_monitor",
]

SMOOTHING_PAIRS = ((1, 0), (2, 0), (1, 1))


def scalar_wiener_norm(ahat, spec, rho=0.0, norm="euclidean"):
    """``sum_k exp(rho |k|) |ahat(k)|`` for one coefficient array."""
    w = np.exp(rho * spec.k_norm(norm)) if rho else 1.0
    return float(np.sum(w * np.abs(ahat)))


def wiener_norm(f, rho=0.0, norm="euclidean"):
    """``|f|_rho = sum_k exp(rho |k|) (|uhat(k)| + |vhat(k)|)``."""
    if rho < 0:
        raise ValueError("rho must be non-negative")
    return scalar_wiener_norm(f.uhat, f.spec, rho, norm) + scalar_wiener_norm(f.vhat, f.spec, rho, norm)


def _embed(ahat, spec, big):
    out = np.zeros(big.shape, complex)
    K1, K2 = spec.k_index
    out[K1 % big.N1, K2 % big.N2] = ahat * spec.nyquist_mask
    return out


def convolve(ahat, bhat, spec):
    """Exact coefficients of the product of two fields.

    Both inputs are zero-padded to the doubled lattice, where the product of
    two resolved fields has no aliasing.  Returns ``(chat, big_spec)``.
    """
    big = TorusSpec(spec.L1, spec.L2, 2 * spec.N1, 2 * spec.N2)
    a = big.to_physical(_embed(ahat, spec, big))
    b = big.to_physical(_embed(bhat, spec, big))
    return big.to_spectral(a * b), big


def spacetime_alpha_norm(traj, alpha, horizon=None, norm="euclidean"):
    """``sum_k sup_{t <= horizon} exp(alpha t |k|) |fhat(k, t)|`` over both components.

    The sup is taken in log space so large ``alpha t |k|`` cannot overflow
    before the decay of the coefficient is applied.
    """
    if horizon is not None:
        traj = traj.until(horizon)
    kn = traj.spec.k_norm(norm)
    w = alpha * traj.times[:, None, None] * kn[None]
    total = 0.0
    with np.errstate(divide="ignore"):
        for stack in (traj.uhat, traj.vhat):
            logsup = np.max(w + np.log(np.abs(stack)), axis=0)
            total += float(np.sum(np.exp(logsup)))
    return total


def sobolev_norm(f, s, homogeneous=True):
    """``H^s`` norm from the coefficients.

    The homogeneous norm uses weights ``|kt|^(2s)`` and skips ``k = 0``; the
    inhomogeneous one uses ``(1 + |kt|^2)^s``.
    """
    kabs = f.spec.ktilde_abs
    mass = np.abs(f.uhat) ** 2 + np.abs(f.vhat) ** 2
    if homogeneous:
        nz = kabs > 0
        w = kabs[nz] ** (2 * s)
        return float(np.sqrt(np.sum(w * mass[nz])))
    return float(np.sqrt(np.sum((1.0 + kabs ** 2) ** s * mass)))


def l2_norm(f):
    return float(np.sqrt(np.sum(np.abs(f.uhat) ** 2 + np.abs(f.vhat) ** 2)))


class RadiusEstimate(NamedTuple):
    rho_est: float
    fit_quality: float
    n_shells: int

    @property
    def reliable(self):
        return self.fit_quality >= 0.9


def _shell_maxima(f, floor):
    spec = f.spec
    kabs = spec.ktilde_abs.ravel()
    amp = (np.abs(f.uhat) + np.abs(f.vhat)).ravel()
    delta = min(2 * np.pi / spec.L1, 2 * np.pi / spec.L2)
    nz = kabs > 0
    peak = float(np.max(amp[nz], initial=0.0))
    if peak == 0:
        return np.empty(0), np.empty(0)
    shell = np.rint(kabs / delta).astype(int)
    order = np.lexsort((-amp, shell))  # by shell, largest amplitude first
    order = order[nz[order]]
    first = np.concatenate([[True], shell[order][1:] != shell[order][:-1]])
    top = order[first]
    keep = amp[top] > floor * peak
    return kabs[top][keep], amp[top][keep]


def analyticity_radius_estimate(f, min_shells=6, floor=1e-14):
    """Decay rate of the shell-maximum spectrum.

    Shells have width ``min(2 pi / L1, 2 pi / L2)`` in ``|kt|``.  In each shell
    ``M = max(|uhat| + |vhat|)`` is taken, shells below ``floor * peak`` are
    dropped, and ``log M`` is fitted by least squares against the ``|kt|``
    where the maximum sits.  ``rho_est`` is minus the slope and
    ``fit_quality`` is the ``R^2`` of the fit.

    Raises
    ------
    ValueError
        If fewer than ``min_shells`` shells survive the noise floor.
    """
    x, m = _shell_maxima(f, floor)
    if x.size < max(2, min_shells):
        raise ValueError(
            f"insufficient decay range: {x.size} usable shells, need {max(2, min_shells)}"
        )
    y = np.log(m)
    slope, icpt = np.polyfit(x, y, 1)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum((y - (slope * x + icpt)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    return RadiusEstimate(float(-slope), float(r2), int(x.size))


@dataclass
class NormSeries:
    """Norm time series; ``rho_est`` is NaN where the radius fit is not possible."""

    times: np.ndarray
    l2: np.ndarray
    h1dot: np.ndarray
    wiener0: np.ndarray
    rho_est: np.ndarray

    COLUMNS = ("t", "l2", "h1dot", "wiener0", "rho_est")

    def __post_init__(self):
        n = len(self.times)
        for name in ("l2", "h1dot", "wiener0", "rho_est"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} has length {len(getattr(self, name))}, expected {n}")

    @classmethod
    def from_trajectory(cls, traj, min_shells=6):
        rows = []
        for i in range(len(traj)):
            f = traj[i]
            try:
                rho = analyticity_radius_estimate(f, min_shells).rho_est
            except ValueError:
                rho = np.nan
            rows.append((l2_norm(f), sobolev_norm(f, 1), wiener_norm(f), rho))
        cols = np.array(rows, float).reshape(-1, 4).T
        return cls(traj.times.copy(), *cols)

    @property
    def flagged(self):
        """Rows with a non-finite entry."""
        stack = np.vstack([self.l2, self.h1dot, self.wiener0, self.rho_est])
        return ~np.all(np.isfinite(stack), axis=0)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.COLUMNS)
            for row in zip(self.times, self.l2, self.h1dot, self.wiener0, self.rho_est):
                w.writerow([format(float(x), ".17g") for x in row])

    @classmethod
    def read_csv(cls, path):
        with open(path, newline="") as fh:
            r = csv.reader(fh)
            header = next(r)
            if tuple(header) != cls.COLUMNS:
                raise ValueError(f"unexpected CSV header {header}")
            data = np.array([[float(x) for x in row] for row in r], float).reshape(-1, 5)
        return cls(*data.T)


def strip_halfwidth(t, C):
    """``exp(-t) min(1, t^(1/4)) / (2 C)``."""
    t = np.asarray(t, float)
    return np.exp(-t) * np.minimum(1.0, np.maximum(t, 0.0) ** 0.25) / (2 * C)


def calibrated_constant(pairs=SMOOTHING_PAIRS):
    """Largest smoothing constant over the ``(s, r)`` pairs used by the estimates."""
    return max(smoothing_constant(s, r) for s, r in pairs)


def _g_tilde(t):
    return np.exp(t) * (t if t >= 1 else np.sqrt(t))


def short_time_horizon(C, M):
    """Largest ``T`` with ``exp(T) max(T, sqrt(T)) <= 1 / (2 C M)``."""
    if C <= 0 or M <= 0:
        raise ValueError("C and M must be positive")
    target = 1.0 / (2 * C * M)
    hi = 1.0
    while _g_tilde(hi) < target:
        hi *= 2
    return float(optimize.brentq(lambda t: _g_tilde(t) - target, 0.0, hi, xtol=1e-15, rtol=1e-15))


def _g(T, s=1):
    return np.exp(2 * T) * (T ** (1 + s / 4) if T >= 1 else T ** ((5 - 3 * s) / 4))


def first_condition_alpha(C, T, s=1):
    """Largest admissible ``|alpha|``: ``1 / (2 C g(T))``."""
    return float(1.0 / (2 * C * _g(T, s)))


@dataclass
class ThresholdReport:
    A: float
    alpha: float
    I1_bound: float
    I2_bound: float
    r1: float
    r: float
    C: float
    horizon: float | None = None
    M: float | None = None
    T_star: float | None = None
    alpha_max: float | None = None
    strip_t: list = field(default_factory=list)
    strip_halfwidth: list = field(default_factory=list)

    def halfwidth(self, t):
        return strip_halfwidth(t, self.C)

    def to_json(self, path=None):
        text = json.dumps(asdict(self), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def thresholds(spec, alpha, T=None, M=None, C=None, norm="euclidean", strip_t=None):
    """Smallness radius, short-time horizon and strip tabulation.

    Parameters
    ----------
    spec : TorusSpec
    alpha : float
        Weight of the space-time Wiener norm.  Without ``T`` it must lie in
        ``(0, A)``.
    T : float, optional
        Finite horizon for the operator bounds.
    M : float, optional
        L2 size of the data.  Enables ``T_star`` and ``alpha_max``.
    C : float, optional
        Estimate constant; defaults to :func:`calibrated_constant`.
    """
    table = build_symbol_table(spec, norm)
    bounds = I_norm_bound(spec, alpha, horizon=T, n_probes=0, norm=norm)
    s = bounds.bound_I1 + bounds.bound_I2
    r1 = 1.0 / (3 * s + 1)
    C = calibrated_constant() if C is None else float(C)
    if strip_t is None:
        strip_t = np.linspace(0.0, 2.0, 401)
    strip_t = np.asarray(strip_t, float)
    rep = ThresholdReport(
        A=table.A, alpha=float(alpha), I1_bound=bounds.bound_I1, I2_bound=bounds.bound_I2,
        r1=r1, r=2 * r1, C=C, horizon=T,
        strip_t=strip_t.tolist(), strip_halfwidth=strip_halfwidth(strip_t, C).tolist(),
    )
    if M is not None:
        rep.M = float(M)
        rep.T_star = short_time_horizon(C, M)
        rep.alpha_max = first_condition_alpha(C, rep.T_star)
    return rep


@dataclass
class ContinuationVerdict:
    verdict: str
    sup_l2: float
    M_cap: float
    C: float
    t0: float | None = None
    t_last: float | None = None

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)


def continuation_monitor(traj, M_cap, blowup=None, C=None, safety=0.5):
    """Decide whether a run can be restarted past its final time.

    ``CONTINUE`` when the L2 norm stays below ``M_cap``; the suggested restart
    horizon is ``t0 = safety * (1 / (2 C M_cap))^2``.  ``SUSPECT`` when the
    blow-up detector fired (``blowup`` is the raised error) or the cap is
    exceeded.
    """
    C = calibrated_constant() if C is None else float(C)
    sup = max((l2_norm(traj[i]) for i in range(len(traj))), default=0.0)
    if blowup is not None:
        return ContinuationVerdict("SUSPECT", sup, float(M_cap), C,
                                   t_last=float(getattr(blowup, "t_last", traj.times[-1])))
    if not np.isfinite(sup) or sup > M_cap:
        return ContinuationVerdict("SUSPECT", sup, float(M_cap), C, t_last=float(traj.times[-1]))
    t0 = safety * (1.0 / (2 * C * M_cap)) ** 2
    return ContinuationVerdict("CONTINUE", sup, float(M_cap), C, t0=t0,
                               t_last=float(traj.times[-1]))
