"""Maximum-likelihood estimation of the physical parameters.

The objective is the negative Kalman log-likelihood; gradients come from
central finite differences in an unconstrained coordinate system (log
transforms for every positive parameter, identity for the advection), and
the optimizer is a standard adaptive-moment gradient ascent.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core import EstimationError, NumericalError, PhysicalParams, SpaceTimeCube
from .basis import wavenumber_sets
from .dynamics import build_model
from .kalman import kalman_filter
from .util import parallel_map

log = logging.getLogger(__name__)

PENALTY = 1e12


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_iters: int = 500
    grad_tol: float = 1e-5
    fd_step: float = 1e-4

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")


@dataclass(frozen=True)
class FitTemplate:
    """Shape of the estimation problem: which grid, step and parameterization.

    With ``anisotropic`` off, the diffusion and noise-shape diagonals are tied
    across axes, which stabilizes small-sample fits.  ``demean`` subtracts the
    spatial mean of every frame before filtering.
    """

    n1: int
    n2: int
    dt: float
    extent: float = 1.0
    lowpass: int = None
    anisotropic: bool = False
    demean: bool = False

    @property
    def param_names(self) -> tuple:
        names = ["mu1", "mu2", "log_eta"]
        if self.anisotropic:
            names += ["log_sigma1", "log_sigma2", "log_phi1", "log_phi2"]
        else:
            names += ["log_sigma", "log_phi"]
        names += ["log_noise_scale", "log_obs_var"]
        return tuple(names)

    def pack(self, p: PhysicalParams, obs_var: float) -> np.ndarray:
        """Map valid parameters to unconstrained coordinates (exact inverse of
        :meth:`unpack`)."""
        if obs_var <= 0:
            raise ValueError("obs_var must be positive")
        vec = [p.mu[0], p.mu[1], np.log(p.eta)]
        if self.anisotropic:
            vec += [np.log(p.sigma_diag[0]), np.log(p.sigma_diag[1]),
                    np.log(p.noise_shape_diag[0]), np.log(p.noise_shape_diag[1])]
        else:
            vec += [np.log(p.sigma_diag[0]), np.log(p.noise_shape_diag[0])]
        vec += [np.log(p.noise_scale), np.log(obs_var)]
        return np.asarray(vec, dtype=float)

    def unpack(self, vec) -> tuple:
        """Decode an unconstrained vector; always yields valid parameters."""
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (len(self.param_names),):
            raise ValueError(f"expected {len(self.param_names)} coordinates")
        mu = np.array([vec[0], vec[1]])
        eta = float(np.exp(vec[2]))
        if self.anisotropic:
            sig = np.exp(vec[3:5])
            phi = np.exp(vec[5:7])
            rest = vec[7:]
        else:
            sig = np.array([np.exp(vec[3])] * 2)
            phi = np.array([np.exp(vec[4])] * 2)
            rest = vec[5:]
        p = PhysicalParams(mu=mu, sigma_diag=sig, eta=eta, noise_shape_diag=phi,
                           noise_scale=float(np.exp(rest[0])))
        return p, float(np.exp(rest[1]))


def _prepare_data(data: SpaceTimeCube, template: FitTemplate) -> SpaceTimeCube:
    if (data.grid.n1, data.grid.n2) != (template.n1, template.n2):
        raise ValueError("data grid does not match the template")
    if not template.demean:
        return data
    frames = data.frames - data.frames.mean(axis=1, keepdims=True)
    return SpaceTimeCube(grid=data.grid, dt=data.dt, frames=frames, t0=data.t0)


def neg_loglik(vec, data: SpaceTimeCube, template: FitTemplate) -> float:
    """Negative log-likelihood at unconstrained coordinates; filter failures
    map to a large penalty."""
    p, obs_var = template.unpack(vec)
    sets = wavenumber_sets(template.n1, template.n2)
    try:
        model = build_model(data.grid, sets, p, template.dt, lowpass=template.lowpass)
        fr = kalman_filter(model, data, obs_var)
    except NumericalError as exc:
        log.warning("filter failed at a probe point (%s); penalizing", exc)
        return PENALTY
    return -fr.loglik


def neg_loglik_grad(vec, data: SpaceTimeCube, template: FitTemplate,
                    fd_step: float = 1e-4) -> tuple:
    """Objective value and central-difference gradient.

    Probes where the filter fails contribute zero gradient in that coordinate
    and are logged.  Steps are relative to each coordinate's magnitude.
    """
    vec = np.asarray(vec, dtype=float)
    data = _prepare_data(data, template)
    value = neg_loglik(vec, data, template)
    steps = fd_step * np.maximum(1.0, np.abs(vec))

    probes = []
    for i in range(vec.size):
        for sgn in (+1.0, -1.0):
            probe = vec.copy()
            probe[i] += sgn * steps[i]
            probes.append(probe)
    values = parallel_map(lambda pv: neg_loglik(pv, data, template), probes)

    grad = np.zeros_like(vec)
    for i in range(vec.size):
        up, down = values[2 * i], values[2 * i + 1]
        if up >= PENALTY and down >= PENALTY:
            log.warning("both probes failed for %s; zero gradient component",
                        template.param_names[i])
            continue
        if up >= PENALTY:
            grad[i] = (value - down) / steps[i]
        elif down >= PENALTY:
            grad[i] = (up - value) / steps[i]
        else:
            grad[i] = (up - down) / (2.0 * steps[i])
    return value, grad


def adam_step(grad, m, v, t, cfg: OptimizerConfig) -> tuple:
    """One adaptive-moment update; returns (step, m, v) for iteration t >= 1."""
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad * grad
    m_hat = m / (1.0 - cfg.beta1 ** t)
    v_hat = v / (1.0 - cfg.beta2 ** t)
    step = cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)
    return step, m, v


@dataclass
class FitResult:
    params: PhysicalParams
    obs_var: float
    objective: float
    trace: np.ndarray = field(repr=False)
    n_iters: int = 0
    converged: bool = False


def fit(data: SpaceTimeCube, init: PhysicalParams, init_obs_var: float,
        template: FitTemplate, cfg: OptimizerConfig = None) -> FitResult:
    """Gradient-ascent maximum likelihood from an initial parameter guess.

    The raw objective trace may be non-monotone; the best parameters seen are
    returned, so the result never scores worse than the initialization.
    """
    cfg = cfg or OptimizerConfig()
    if data.n_frames < 3:
        raise EstimationError("need at least 3 frames to estimate dynamics")
    data = _prepare_data(data, template)
    x = template.pack(init, init_obs_var)
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    trace = []
    best_x = x.copy()
    best_val = np.inf
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        value, grad = neg_loglik_grad(x, data, template, fd_step=cfg.fd_step)
        trace.append(value)
        if value < best_val:
            best_val = value
            best_x = x.copy()
        if not np.isfinite(grad).all():
            raise EstimationError("gradient lost finiteness")
        if np.max(np.abs(grad)) < cfg.grad_tol:
            converged = True
            break
        step, m, v = adam_step(grad, m, v, it, cfg)
        x = x - step
    if cfg.max_iters == 0:
        best_x = x
        best_val = neg_loglik(x, data, template)
        trace.append(best_val)
    else:
        final = neg_loglik(x, data, template)
        trace.append(final)
        if final < best_val:
            best_val = final
            best_x = x.copy()
    if best_val >= PENALTY:
        raise EstimationError("every probed parameter point failed to filter")
    p, obs_var = template.unpack(best_x)
    return FitResult(params=p, obs_var=obs_var, objective=float(best_val),
                     trace=np.asarray(trace), n_iters=it, converged=converged)
