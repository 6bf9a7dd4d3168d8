"""Closed-form kernel, transfer function, spectra and the stationary
space-time covariance of the convolution-generated process.

These are the ground-truth quantities the finite state-space model is meant
to reproduce.  All closed forms follow the unit-scale normalization; the
``noise_scale`` multiplier of :class:`~stgp.core.PhysicalParams` is applied
where process noise enters a model, not here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import NumericalError, PhysicalParams


class SpectrumQuery(NamedTuple):
    """A spatial angular frequency u (length-d) and temporal frequency v."""

    u: np.ndarray
    v: float


def space_time_kernel(s, t: float, p: PhysicalParams) -> float:
    """Causal convolution kernel: exp(-eta t) times a Gaussian density with
    mean t*mu and covariance t*Sigma; zero for t <= 0.

    The t -> 0+ limit is a point mass; the value at exactly t = 0 is defined
    as 0, which is immaterial under any integral.
    """
    if t <= 0.0:
        return 0.0
    s = np.atleast_1d(np.asarray(s, dtype=float))
    var = t * p.sigma_diag
    z = s - t * p.mu
    quad = float(np.sum(z * z / var))
    norm = (2.0 * np.pi) ** (-p.d / 2.0) / np.sqrt(np.prod(var))
    return float(np.exp(-p.eta * t) * norm * np.exp(-0.5 * quad))


def kernel_transfer(u, v, p: PhysicalParams) -> complex:
    """Fourier transform of the kernel: 1 / (eta + u'Su/2 + i u'mu + i v)."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    denom = (p.eta + 0.5 * np.sum(p.sigma_diag * u * u)
             + 1j * (np.sum(p.mu * u) + np.asarray(v, dtype=float)))
    return 1.0 / denom


def noise_spectrum(u, p: PhysicalParams):
    """Spatial power spectrum of the driving noise: exp(-u'Phi u / 2)."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    return np.exp(-0.5 * np.sum(p.noise_shape_diag * u * u))


def noise_covariance(h, p: PhysicalParams):
    """Spatial covariance of the driving noise: Gaussian with shape Phi."""
    h = np.atleast_1d(np.asarray(h, dtype=float))
    norm = (2.0 * np.pi) ** (-p.d / 2.0) / np.sqrt(np.prod(p.noise_shape_diag))
    return norm * np.exp(-0.5 * np.sum(h * h / p.noise_shape_diag))


def spectral_factor(u, v, p: PhysicalParams) -> complex:
    """Half-spectrum factor G with C(u, v) = G(u, v) * G(-u, -v)."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    return kernel_transfer(u, v, p) * np.exp(-0.25 * np.sum(p.noise_shape_diag * u * u))


def power_spectrum(u, v, p: PhysicalParams) -> float:
    """Space-time power spectrum of the process.

    Equals exp(-u'Phi u/2) / ((eta + u'Su/2)^2 + (v + u'mu)^2); strictly positive.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    a = p.eta + 0.5 * np.sum(p.sigma_diag * u * u)
    b = np.sum(p.mu * u) + np.asarray(v, dtype=float)
    return np.exp(-0.5 * np.sum(p.noise_shape_diag * u * u)) / (a * a + b * b)


@dataclass(frozen=True)
class QuadratureConfig:
    """Tensor-trapezoid inverse-transform settings.

    cutoff : half-width of the frequency box per axis (rad)
    points : grid points per axis (odd keeps 0 on the grid)
    boundary_tol : declare the box unresolved when the spectrum at the box
        boundary exceeds this fraction of its peak
    """

    cutoff: float = 16.0 * np.pi
    points: int = 257
    boundary_tol: float = 1e-5


def _axis(cfg: QuadratureConfig) -> np.ndarray:
    return np.linspace(-cfg.cutoff, cfg.cutoff, cfg.points)


def _spectrum_grid(p: PhysicalParams, cfg: QuadratureConfig) -> tuple:
    """Spectrum evaluated on the tensor (u, v) grid; axes returned alongside."""
    ax = _axis(cfg)
    if p.d == 1:
        u, v = np.meshgrid(ax, ax, indexing="ij")
        a = p.eta + 0.5 * p.sigma_diag[0] * u * u
        b = p.mu[0] * u + v
        spec = np.exp(-0.5 * p.noise_shape_diag[0] * u * u) / (a * a + b * b)
        return spec, (ax, ax)
    u1, u2, v = np.meshgrid(ax, ax, ax, indexing="ij")
    a = p.eta + 0.5 * (p.sigma_diag[0] * u1 * u1 + p.sigma_diag[1] * u2 * u2)
    b = p.mu[0] * u1 + p.mu[1] * u2 + v
    quad = p.noise_shape_diag[0] * u1 * u1 + p.noise_shape_diag[1] * u2 * u2
    spec = np.exp(-0.5 * quad) / (a * a + b * b)
    return spec, (ax, ax, ax)


def _check_resolved(spec: np.ndarray, cfg: QuadratureConfig) -> None:
    peak = spec.max()
    boundary = 0.0
    for axis in range(spec.ndim):
        sl_lo = [slice(None)] * spec.ndim
        sl_lo[axis] = 0
        sl_hi = [slice(None)] * spec.ndim
        sl_hi[axis] = -1
        boundary = max(boundary, spec[tuple(sl_lo)].max(), spec[tuple(sl_hi)].max())
    if boundary > cfg.boundary_tol * peak:
        raise NumericalError(
            f"frequency box does not resolve the spectrum: boundary/peak = "
            f"{boundary / peak:.3e} exceeds {cfg.boundary_tol:.1e}; raise the cutoff")


def stationary_covariance(h, lag: float, p: PhysicalParams,
                          cfg: QuadratureConfig = None) -> float:
    """Stationary covariance at spatial offset h and temporal lag, by numerical
    inverse Fourier transform of the power spectrum over a truncated box.

    Raises :class:`NumericalError` when the box boundary carries more spectrum
    mass than ``cfg.boundary_tol`` allows.
    """
    cfg = cfg or QuadratureConfig()
    h = np.atleast_1d(np.asarray(h, dtype=float))
    spec, axes = _spectrum_grid(p, cfg)
    _check_resolved(spec, cfg)
    if p.d == 1:
        ua, va = axes
        phase = np.exp(1j * (ua[:, None] * h[0] + va[None, :] * lag))
        integ = np.trapezoid(np.trapezoid(spec * phase, va, axis=1), ua, axis=0)
        return float(integ.real / (2.0 * np.pi) ** 2)
    u1a, u2a, va = axes
    phase = np.exp(1j * (u1a[:, None, None] * h[0] + u2a[None, :, None] * h[1]
                         + va[None, None, :] * lag))
    integ = np.trapezoid(np.trapezoid(np.trapezoid(spec * phase, va, axis=2),
                                      u2a, axis=1), u1a, axis=0)
    return float(integ.real / (2.0 * np.pi) ** 3)
