"""Time evolution: the integrating-factor RK4 stepper, the Picard iteration of
the Duhamel map and the complexified hierarchy along ``y = alpha t``.

The evolved system, in coefficients, is

    d/dt uhat = -sigma uhat + N(u),    N(u) = -i kt * FT(|u|^2 / 2)

for the gradient pair ``u = (u, v)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .analysis import l2_norm, spacetime_alpha_norm, wiener_norm
from .linear import I_norm_bound, Trajectory, duhamel_integral
from .spectral import SpectralField, build_symbol_table, fft_workers

__all__ = [
    "StepperConfig",
    "BlowUpError",
    "nonlinearity",
    "integrate",
    "PicardReport",
    "picard_mild_solve",
    "ComplexPair",
    "complex_shift_solve",
]

SCHEMES = ("IFRK4",)
DEALIAS = ("two_thirds", "none")


@dataclass
class StepperConfig:
    """Fixed-step integrator settings.

    ``T`` must be a whole number of steps; every ``save_every``-th state is
    stored (the final state is always stored).
    """

    dt: float
    T: float
    scheme: str = "IFRK4"
    dealias: str = "two_thirds"
    save_every: int = 1
    blowup_factor: float = 10.0

    def __post_init__(self):
        if not self.dt > 0 or not self.T > 0:
            raise ValueError("dt and T must be positive")
        if self.dt > self.T:
            raise ValueError(f"dt={self.dt} exceeds T={self.T}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; available: {SCHEMES}")
        if self.dealias not in DEALIAS:
            raise ValueError(f"dealias must be one of {DEALIAS}, got {self.dealias!r}")
        if int(self.save_every) != self.save_every or self.save_every < 1:
            raise ValueError("save_every must be a positive integer")
        n = round(self.T / self.dt)
        if abs(n * self.dt - self.T) > 1e-9 * self.T:
            raise ValueError(f"T={self.T} is not a multiple of dt={self.dt}")

    @property
    def nsteps(self):
        return int(round(self.T / self.dt))


class BlowUpError(RuntimeError):
    """Raised when a step produces NaN/inf or a sudden L2 jump.

    Attributes
    ----------
    t_last : float
        Last time with an accepted state.
    trajectory : Trajectory or None
        Stored states up to the failure.
    level : int or None
        Hierarchy level that failed (complexified runs only).
    """

    def __init__(self, t_last, trajectory=None, level=None, reason=""):
        self.t_last = float(t_last)
        self.trajectory = trajectory
        self.level = level
        where = f" (level {level})" if level is not None else ""
        super().__init__(f"blow-up suspected at t={self.t_last:g}{where}: {reason}")


def _mask(spec, dealias):
    return spec.dealias_mask if dealias == "two_thirds" else spec.nyquist_mask


def _fft(a):
    return sfft.fft2(a, axes=(-2, -1), norm="forward", workers=fft_workers())


def _ifft(a):
    return sfft.ifft2(a, axes=(-2, -1), norm="forward", workers=fft_workers()).real


def _grad_hat(spec, qhat):
    """``-i kt qhat`` stacked as ``(2, N1, N2)``."""
    kt1, kt2 = spec.ktilde
    return np.stack([-1j * kt1 * qhat, -1j * kt2 * qhat])


def _nl_hat(spec, W, mask):
    """Nonlinear term for the stacked state ``W = (uhat, vhat)``."""
    u = _ifft(W * mask)
    qhat = _fft(0.5 * (u[0] ** 2 + u[1] ** 2)) * mask
    return _grad_hat(spec, qhat)


def nonlinearity(f, dealias="two_thirds"):
    """Coefficients of ``-grad(|u|^2 / 2)``, computed pseudo-spectrally.

    The result is a gradient field with an exactly vanishing mean.
    """
    W = _nl_hat(f.spec, np.stack([f.uhat, f.vhat]), _mask(f.spec, dealias))
    return SpectralField(f.spec, W[0], W[1], True)


def _l2(W):
    return float(np.sqrt(np.sum(W.real ** 2 + W.imag ** 2)))


def _ifrk4(W0, sigma, rhs, dt, nsteps, save_every, factor, on_fail, observe=None):
    """March ``W' = -sigma W + rhs(W)`` with integrating-factor RK4.

    Returns ``(times, stack)`` of the saved states.  ``on_fail(t_last, times,
    stack, W_bad, reason)`` must raise; ``observe(W)`` sees every accepted state.
    """
    E = np.exp(-sigma * dt)
    E2 = np.exp(-sigma * dt / 2)
    saves = list(range(0, nsteps + 1, save_every))
    if saves[-1] != nsteps:
        saves.append(nsteps)
    stack = np.empty((len(saves),) + W0.shape, complex)
    stack[0] = W0
    times = np.array(saves, float) * dt
    W = W0.copy()
    norm = _l2(W)
    if observe is not None:
        observe(W)
    j = 1
    half = 0.5 * dt
    for n in range(1, nsteps + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            k1 = rhs(W)
            k2 = rhs(E2 * (W + half * k1))
            k3 = rhs(E2 * W + half * k2)
            k4 = rhs(E * W + dt * (E2 * k3))
            Wn = E * W + (dt / 6) * (E * k1 + 2 * E2 * (k2 + k3) + k4)
        new = _l2(Wn)
        if not np.isfinite(new):
            on_fail((n - 1) * dt, times[:j], stack[:j], Wn, "non-finite state")
        if norm > 0 and new > factor * norm:
            on_fail((n - 1) * dt, times[:j], stack[:j], Wn,
                    f"L2 grew by {new / norm:.3g}x in one step")
        W, norm = Wn, new
        if observe is not None:
            observe(W)
        if j < len(saves) and n == saves[j]:
            stack[j] = W
            j += 1
    return times, stack


def integrate(u0, cfg):
    """Evolve ``u0`` with the fixed-step stepper described by ``cfg``.

    Raises
    ------
    BlowUpError
        If a step produces non-finite values or the L2 norm jumps by more
        than ``cfg.blowup_factor`` in one step.
    """
    spec = u0.spec
    sigma = build_symbol_table(spec).sigma
    mask = _mask(spec, cfg.dealias)
    W0 = np.stack([u0.uhat, u0.vhat])

    def fail(t_last, times, stack, W_bad, reason):
        part = Trajectory(spec, times.copy(), stack[:, 0].copy(), stack[:, 1].copy(), u0.gradient)
        raise BlowUpError(t_last, part, reason=reason)

    times, stack = _ifrk4(W0, sigma, lambda W: _nl_hat(spec, W, mask), cfg.dt, cfg.nsteps,
                          int(cfg.save_every), cfg.blowup_factor, fail)
    return Trajectory(spec, times, stack[:, 0], stack[:, 1], u0.gradient)


@dataclass
class PicardReport:
    iterates: int
    residuals: np.ndarray
    contraction_ratios: np.ndarray
    converged: bool
    threshold_r1: float | None
    data_norm: float
    ratio_bound: float | None = None
    alpha: float = 0.0
    horizon: float | None = None
    diverged: bool = False


def picard_mild_solve(u0, alpha, horizon=None, max_iters=50, dt=1e-3, T=None, tol=1e-13,
                      dealias="two_thirds", norm="euclidean"):
    """Fixed-point iteration of the Duhamel map on a uniform time grid.

    Starting from the trend ``exp(-t L) u0``, each iterate is

        u_{m+1} = exp(-t L) u0 - (I_1, I_2)(|u_m|^2 / 2)

    with the integrals from :func:`ks2d.linear.duhamel_integral`.  Residuals
    ``||u_{m+1} - u_m||`` are measured in the space-time Wiener norm with
    weight ``alpha``.

    Parameters
    ----------
    u0 : SpectralField
    alpha : float
        Without ``horizon`` it must lie in ``(0, A)``.
    horizon : float, optional
        Finite horizon; the grid then covers ``[0, horizon]``.
    T : float, optional
        Length of the computational window when ``horizon`` is None
        (default 1).
    tol : float
        Stop when the residual falls below ``tol * max(1, ||u_m||)``.

    Returns
    -------
    (Trajectory, PicardReport)
    """
    spec = u0.spec
    table = build_symbol_table(spec, norm)
    if horizon is None:
        if not (table.A > 0 and 0 < alpha < table.A):
            raise ValueError(
                f"no gap: infinite-horizon Picard needs 0 < alpha < A = {table.A:g}, got {alpha:g}"
            )
        T = 1.0 if T is None else T
    else:
        T = horizon
    nt = int(round(T / dt)) + 1
    if abs((nt - 1) * dt - T) > 1e-9 * T:
        raise ValueError(f"T={T} is not a multiple of dt={dt}")
    times = np.arange(nt) * dt
    sigma = table.sigma
    mask = _mask(spec, dealias)
    kt1, kt2 = spec.ktilde

    decay = np.exp(-sigma[None] * times[:, None, None])
    trend_u = decay * u0.uhat
    trend_v = decay * u0.vhat
    del decay

    bounds = I_norm_bound(spec, alpha, horizon=horizon, n_probes=0, norm=norm)
    bsum = bounds.bound_I1 + bounds.bound_I2
    r1 = 1.0 / (3 * bsum + 1)
    report = PicardReport(
        iterates=0, residuals=np.empty(0), contraction_ratios=np.empty(0), converged=False,
        threshold_r1=r1, data_norm=wiener_norm(u0, 0.0, norm), ratio_bound=bsum * 3 * r1,
        alpha=float(alpha), horizon=horizon,
    )

    cur = Trajectory(spec, times, trend_u.copy(), trend_v.copy(), u0.gradient)
    residuals = []
    for m in range(max_iters):
        phys = _ifft(np.stack([cur.uhat, cur.vhat], axis=1) * mask)
        qhat = _fft(0.5 * (phys[:, 0] ** 2 + phys[:, 1] ** 2)) * mask
        del phys
        J = duhamel_integral(sigma, qhat, dt)
        del qhat
        nxt = Trajectory(spec, times, trend_u - 1j * kt1 * J, trend_v - 1j * kt2 * J, u0.gradient)
        del J
        diff = Trajectory(spec, times, nxt.uhat - cur.uhat, nxt.vhat - cur.vhat)
        res = spacetime_alpha_norm(diff, alpha, norm=norm)
        del diff
        residuals.append(res)
        cur = nxt
        report.iterates = m + 1
        if not np.isfinite(res):
            report.diverged = True
            break
        scale = max(1.0, spacetime_alpha_norm(cur, alpha, norm=norm))
        if res <= tol * scale:
            report.converged = True
            break
        r = np.asarray(residuals)
        if r.size >= 4 and np.all(r[-3:] > r[-4:-1]) and r[-1] > 1e6 * max(scale, 1.0):
            report.diverged = True
            break
    r = np.asarray(residuals, float)
    report.residuals = r
    with np.errstate(divide="ignore", invalid="ignore"):
        report.contraction_ratios = r[1:] / r[:-1] if r.size > 1 else np.empty(0)
    return cur, report


@dataclass
class ComplexPair:
    """Real and imaginary parts ``(U, V)`` of one hierarchy level on ``y = alpha t``."""

    U: Trajectory
    V: Trajectory
    alpha_vec: np.ndarray
    level: int = 0

    def __post_init__(self):
        self.alpha_vec = np.asarray(self.alpha_vec, float)
        if self.alpha_vec.shape != (2,):
            raise ValueError("alpha_vec must be a real 2-vector")

    @property
    def times(self):
        return self.U.times

    def sup_l2(self):
        """``sup_t (||U(t)||_L2 + ||V(t)||_L2)`` over the stored times."""
        return float(max(l2_norm(self.U[i]) + l2_norm(self.V[i]) for i in range(len(self.U))))


def _hierarchy_rhs(spec, alpha_vec, mask):
    kt1, kt2 = spec.ktilde
    adot = 1j * (alpha_vec[0] * kt1 + alpha_vec[1] * kt2)  # symbol of alpha . grad

    def rhs(W):
        # W has shape (levels, 4, N1, N2): U1, U2, V1, V2 per level
        out = np.empty_like(W)
        out[:, 0:2] = -adot * W[:, 2:4]
        out[:, 2:4] = adot * W[:, 0:2]
        if W.shape[0] > 1:
            p = _ifft(W[:-1] * mask)
            U1, U2, V1, V2 = p[:, 0], p[:, 1], p[:, 2], p[:, 3]
            re = _fft(0.5 * (U1 ** 2 + U2 ** 2 - V1 ** 2 - V2 ** 2)) * mask
            im = _fft(U1 * V1 + U2 * V2) * mask
            out[1:, 0] += -1j * kt1 * re
            out[1:, 1] += -1j * kt2 * re
            out[1:, 2] += -1j * kt1 * im
            out[1:, 3] += -1j * kt2 * im
        return out

    return rhs


def complex_shift_solve(u0, alpha_vec, T, n_levels=10, dt=1e-3, dealias="two_thirds",
                        save_every=None, blowup_factor=10.0):
    """Solve levels ``1..n_levels`` of the complexified Picard hierarchy.

    Level ``n`` satisfies

        dU/dt + L U = -alpha.grad V - grad((|U'|^2 - |V'|^2) / 2)
        dV/dt + L V =  alpha.grad U - grad(U' . V')

    where primes denote level ``n - 1`` (level 0 is identically zero), with
    ``U(0) = u0`` and ``V(0) = 0``.  The system is lower triangular in ``n``,
    so all levels are marched together by one integrating-factor RK4 with
    the ``alpha.grad`` coupling in the explicit stage.

    Returns
    -------
    pairs : list of ComplexPair
        One entry per level, ``pairs[n - 1]`` is level ``n``.
    sup_norms : ndarray
        ``sup_t (||U||_L2 + ||V||_L2)`` per level, over every time step.
    """
    spec = u0.spec
    alpha_vec = np.asarray(alpha_vec, float)
    if alpha_vec.shape != (2,):
        raise ValueError("alpha_vec must be a real 2-vector")
    if abs(u0.uhat[0, 0]) + abs(u0.vhat[0, 0]) > 1e-13 * max(1.0, l2_norm(u0)):
        raise ValueError("complex_shift_solve needs zero-mean data")
    if n_levels < 1:
        raise ValueError("n_levels must be >= 1")
    cfg = StepperConfig(dt=dt, T=T, dealias=dealias, save_every=1, blowup_factor=blowup_factor)
    if save_every is None:
        save_every = max(1, cfg.nsteps // 100)
    sigma = build_symbol_table(spec).sigma
    mask = _mask(spec, dealias)
    W0 = np.zeros((n_levels, 4) + spec.shape, complex)
    W0[:, 0] = u0.uhat
    W0[:, 1] = u0.vhat
    rhs = _hierarchy_rhs(spec, alpha_vec, mask)

    sup = np.zeros(n_levels)

    def level_norms(W):
        return np.sqrt(np.sum(np.abs(W[:, :2]) ** 2, axis=(1, 2, 3))) + \
            np.sqrt(np.sum(np.abs(W[:, 2:]) ** 2, axis=(1, 2, 3)))

    def observe(W):
        np.maximum(sup, level_norms(W), out=sup)

    def fail(t_last, times, stack, W_bad, reason):
        bad = [n for n in range(n_levels) if not np.all(np.isfinite(W_bad[n]))]
        if not bad:
            grown = level_norms(W_bad) > blowup_factor * np.maximum(sup, 1e-300)
            bad = list(np.flatnonzero(grown))
        raise BlowUpError(t_last, None, level=(int(bad[0]) + 1) if bad else None, reason=reason)

    times, stack = _ifrk4(W0, sigma, rhs, dt, cfg.nsteps, int(save_every), blowup_factor,
                          fail, observe)
    pairs = []
    for n in range(n_levels):
        U = Trajectory(spec, times, stack[:, n, 0], stack[:, n, 1], u0.gradient)
        V = Trajectory(spec, times, stack[:, n, 2], stack[:, n, 3], u0.gradient)
        pairs.append(ComplexPair(U, V, alpha_vec, level=n + 1))
    return pairs, sup

