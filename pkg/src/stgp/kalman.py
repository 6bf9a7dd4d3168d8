"""Kalman filtering and smoothing over block-diagonal modal models.

Observations on the full regular grid with iid noise admit an exact change of
variables into coefficient space: because the basis columns are orthogonal,
the update decouples into independent per-block filters (the fast path).  The
coupled dense filter is retained for oracle comparisons; both paths produce
the same posterior and the same log-likelihood up to roundoff.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import NumericalError, SpaceTimeCube
from .dynamics import FieldPair, StateSpaceModel

_LOG2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class ObsNoiseSpec:
    """iid per-cell observation noise with a single variance."""

    variance: float

    def __post_init__(self):
        if not self.variance > 0:
            raise ValueError("observation-noise variance must be positive")


class _Group:
    """Batch of same-shaped blocks processed with vectorized recursions."""

    def __init__(self, blocks, obs_local, gram, obs_var):
        self.blocks = list(blocks)
        self.obs_local = np.asarray(obs_local, dtype=int)
        B = len(self.blocks)
        m = self.blocks[0].dim
        q = len(obs_local)
        self.B, self.m, self.q = B, m, q
        self.G = np.stack([b.transition for b in self.blocks])
        self.Q = np.stack([b.noise_cov for b in self.blocks])
        self.offsets = np.array([b.offset for b in self.blocks])
        self.cols = np.array([b.cols for b in self.blocks])          # (B, q)
        self.gram = gram[self.cols]                                  # (B, q)
        self.r = obs_var / self.gram                                 # (B, q)

    def state_indices(self):
        return (self.offsets[:, None] + np.arange(self.m)[None, :]).ravel()


def _group_blocks(model: StateSpaceModel, obs_var: float):
    table = {}
    for b in model.blocks:
        key = (b.dim, b.alpha_idx)
        table.setdefault(key, []).append(b)
    return [
        _Group(blocks, obs_local=key[1], gram=model.basis.gram, obs_var=obs_var)
        for key, blocks in sorted(table.items(), key=lambda kv: kv[0])
    ]


def _stationary_cov(G, Q, max_doublings=64, tol=1e-10):
    """Per-block fixed point of P = G P G' + Q via doubling.

    Blocks whose iteration stalls or diverges (spectral radius >= 1) fall back
    to 10x the one-step noise covariance.
    """
    B = G.shape[0]
    P = Q.copy()
    A = G.copy()
    active = np.ones(B, dtype=bool)
    for _ in range(max_doublings):
        if not active.any():
            break
        incr = A[active] @ P[active] @ A[active].transpose(0, 2, 1)
        scale = 1.0 + np.abs(P[active]).max(axis=(1, 2))
        P[active] = P[active] + incr
        A[active] = A[active] @ A[active]
        rel = np.abs(incr).max(axis=(1, 2)) / scale
        bad = ~np.isfinite(rel) | (np.abs(P[active]).max(axis=(1, 2)) > 1e12)
        done = rel < tol
        idx = np.flatnonzero(active)
        active[idx[done | bad]] = False
        if bad.any():
            P[idx[bad]] = np.nan
    unstable = ~np.isfinite(P).all(axis=(1, 2)) | (np.abs(P).max(axis=(1, 2)) > 1e12) | active
    if unstable.any():
        P[unstable] = 10.0 * Q[unstable]
    P = 0.5 * (P + P.transpose(0, 2, 1))
    return P


@dataclass
class FilterResult:
    """Filtered means, per-step covariances, innovations and log-likelihood."""

    means: np.ndarray            # (K, state_dim) filtered means
    loglik: float
    innovations: np.ndarray      # (K, n) observation-space innovations
    mode: str                    # "decoupled" | "coupled"
    model: StateSpaceModel
    pred_means: np.ndarray = field(repr=False, default=None)
    _covs: object = field(repr=False, default=None)
    _pred_covs: object = field(repr=False, default=None)
    _groups: object = field(repr=False, default=None)

    @property
    def n_steps(self) -> int:
        return self.means.shape[0]

    @property
    def covariances(self):
        """Coupled mode: (K, N, N) array.  Decoupled mode: list of (K, m, m)
        per-block covariance stacks in model block order."""
        if self.mode == "coupled":
            return self._covs
        return [self.block_cov(b.k) for b in self.model.blocks]

    def block_cov(self, k) -> np.ndarray:
        """(K, m, m) filtered covariance history of wavenumber k's block."""
        block = self.model.block_index[k]
        if self.mode == "coupled":
            sl = slice(block.offset, block.offset + block.dim)
            return self._covs[:, sl, sl]
        g, i = self._block_lookup[k]
        return self._covs[g][:, i]

    def cov_matrix(self, t: int) -> np.ndarray:
        """Full state covariance at step t (assembled in decoupled mode)."""
        if self.mode == "coupled":
            return self._covs[t]
        N = self.model.state_dim
        out = np.zeros((N, N))
        for b in self.model.blocks:
            sl = slice(b.offset, b.offset + b.dim)
            out[sl, sl] = self.block_cov(b.k)[t]
        return out

    @property
    def _block_lookup(self):
        if not hasattr(self, "_lookup_cache"):
            lookup = {}
            for g, grp in enumerate(self._groups):
                for i, b in enumerate(grp.blocks):
                    lookup[b.k] = (g, i)
            self._lookup_cache = lookup
        return self._lookup_cache


def _normalize_init(model: StateSpaceModel, init, groups):
    """Return (mean vector, per-group (B, m, m) prior covariances)."""
    N = model.state_dim
    if init is None:
        mean = np.zeros(N)
        covs = [_stationary_cov(g.G, g.Q) for g in groups]
        return mean, covs
    if np.isscalar(init):
        mean = np.zeros(N)
        covs = [np.tile(float(init) * np.eye(g.m), (g.B, 1, 1)) for g in groups]
        return mean, covs
    mean, cov = init
    mean = np.asarray(mean, dtype=float)
    if mean.shape != (N,):
        raise ValueError(f"prior mean must have shape ({N},)")
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (N, N):
        raise ValueError(f"prior covariance must have shape ({N}, {N})")
    covs = []
    for g in groups:
        stack = np.empty((g.B, g.m, g.m))
        for i, b in enumerate(g.blocks):
            sl = slice(b.offset, b.offset + b.dim)
            stack[i] = cov[sl, sl]
        covs.append(stack)
    return mean, covs


def _check_data(model: StateSpaceModel, data: SpaceTimeCube):
    if abs(data.dt - model.dt) > 1e-9 * max(data.dt, model.dt):
        raise ValueError(f"data dt {data.dt} does not match model dt {model.dt}")
    n = model.basis.matrix.shape[0]
    if data.frames.shape[1] != n:
        raise ValueError(
            f"frames have {data.frames.shape[1]} cells, observation map expects {n}")


def kalman_filter(model: StateSpaceModel, data: SpaceTimeCube, noise,
                  init=None, method: str = "auto") -> FilterResult:
    """Run the forward filter and accumulate the exact log-likelihood.

    noise : ObsNoiseSpec or plain variance
    init : None (stationary prior), a scalar prior variance, or a
        (mean, full covariance) pair
    method : "auto" picks the decoupled fast path, which is exact here
        because full-grid data with iid noise keeps basis columns orthogonal;
        "coupled" forces the dense recursion
    """
    if not isinstance(noise, ObsNoiseSpec):
        noise = ObsNoiseSpec(variance=float(noise))
    _check_data(model, data)
    if method == "auto":
        method = "decoupled"
    if method == "decoupled":
        return _filter_decoupled(model, data, noise.variance, init)
    if method == "coupled":
        return _filter_coupled(model, data, noise.variance, init)
    raise ValueError(f"unknown filter method {method!r}")


def _filter_decoupled(model, data, obs_var, init):
    Y = data.frames
    K, n = Y.shape
    B = model.basis.matrix
    gram = model.basis.gram
    J = model.basis.J
    groups = _group_blocks(model, obs_var)
    mean0, prior_covs = _normalize_init(model, init, groups)

    # exact change of variables into coefficient space
    C = (Y @ B) / gram                                   # (K, J)
    resid_sq = np.einsum("ij,ij->i", Y, Y) - (C * C) @ gram
    resid_sq = np.maximum(resid_sq, 0.0)
    log_jacobian = 0.5 * np.sum(np.log(gram))
    n_extra = n - J

    N = model.state_dim
    means = np.empty((K, N))
    pred_means = np.empty((K, N))
    loglik = 0.0
    cov_store = []
    pred_store = []
    group_states = []
    group_idx = []
    group_coeffs = []
    for gi, g in enumerate(groups):
        x = np.stack([mean0[b.offset:b.offset + b.dim] for b in g.blocks])
        group_states.append([x, prior_covs[gi]])
        cov_store.append(np.empty((K, g.B, g.m, g.m)))
        pred_store.append(np.empty((K, g.B, g.m, g.m)))
        group_idx.append((g.offsets[:, None] + np.arange(g.m)[None, :]).ravel())
        group_coeffs.append(np.ascontiguousarray(C[:, g.cols]))

    # The covariance recursion is data-independent; once it reaches its fixed
    # point (time-invariant system), freeze it and reuse the cached gain.
    eye = [np.eye(g.m)[None].repeat(g.B, axis=0) for g in groups]
    frozen = [None] * len(groups)
    for t in range(K):
        for gi, g in enumerate(groups):
            x, P = group_states[gi]
            x = np.einsum("bij,bj->bi", g.G, x)
            if frozen[gi] is None:
                P_prev = P
                P = g.G @ P @ g.G.transpose(0, 2, 1) + g.Q
                P_pred = P
                S = P[:, g.obs_local][:, :, g.obs_local].copy()
                dq = np.arange(g.q)
                S[:, dq, dq] += g.r
                S, Sinv, logdet = _spd_solve(S)
                Kg = P[:, :, g.obs_local] @ Sinv          # (B, m, q)
                A = eye[gi].copy()
                A[:, :, g.obs_local] -= Kg
                P = A @ P @ A.transpose(0, 2, 1) + np.einsum("bmq,bq,bnq->bmn", Kg, g.r, Kg)
                P = 0.5 * (P + P.transpose(0, 2, 1))
                if not np.isfinite(P).all():
                    raise NumericalError("filter covariance lost finiteness; "
                                         "check dt/parameter stability")
                scale = 1.0 + np.abs(P).max()
                if t > 0 and np.abs(P - P_prev).max() < 1e-13 * scale:
                    frozen[gi] = (P_pred, P, Kg, Sinv, logdet)
            else:
                P_pred, P, Kg, Sinv, logdet = frozen[gi]
            pred_store[gi][t] = P_pred
            pred_means[t, group_idx[gi]] = x.ravel()
            nu = group_coeffs[gi][t] - x[:, g.obs_local]  # (B, q)
            x = x + np.einsum("bmq,bq->bm", Kg, nu)
            group_states[gi] = [x, P]
            cov_store[gi][t] = P
            means[t, group_idx[gi]] = x.ravel()
            quad = np.einsum("bq,bqp,bp->b", nu, Sinv, nu)
            loglik += float(-0.5 * np.sum(g.q * _LOG2PI + logdet + quad))
        loglik += -0.5 * (n_extra * (_LOG2PI + np.log(obs_var)) + resid_sq[t] / obs_var)
        loglik -= log_jacobian

    alpha_idx = model.alpha_indices()
    innovations = Y - pred_means[:, alpha_idx] @ B.T
    return FilterResult(means=means, loglik=float(loglik), innovations=innovations,
                        mode="decoupled", model=model, pred_means=pred_means,
                        _covs=cov_store, _pred_covs=pred_store, _groups=groups)


def _spd_solve(S):
    """Inverse and log-determinant of a batch of small SPD matrices, with a
    single jitter retry before giving up."""
    for attempt in range(2):
        sign, logdet = np.linalg.slogdet(S)
        if np.all(sign > 0):
            return S, np.linalg.inv(S), logdet
        if attempt == 0:
            q = S.shape[-1]
            tr = np.maximum(np.trace(S, axis1=-2, axis2=-1), 1e-300)
            S = S + (1e-10 * tr)[:, None, None] * np.eye(q)
    raise NumericalError("innovation covariance is not positive definite; "
                         "dt or parameters drive the model unstable")


def _filter_coupled(model, data, obs_var, init):
    Y = data.frames
    K, n = Y.shape
    N = model.state_dim
    groups = _group_blocks(model, obs_var)
    mean0, prior_covs = _normalize_init(model, init, groups)
    G = np.zeros((N, N))
    Q = np.zeros((N, N))
    P = np.zeros((N, N))
    for gi, g in enumerate(groups):
        for i, b in enumerate(g.blocks):
            sl = slice(b.offset, b.offset + b.dim)
            G[sl, sl] = b.transition
            Q[sl, sl] = b.noise_cov
            P[sl, sl] = prior_covs[gi][i]
    H = model.obs_map
    R = obs_var * np.eye(n)
    x = mean0.copy()

    means = np.empty((K, N))
    pred_means = np.empty((K, N))
    covs = np.empty((K, N, N))
    pred_covs = np.empty((K, N, N))
    innovations = np.empty((K, n))
    loglik = 0.0
    I = np.eye(N)
    for t in range(K):
        x = G @ x
        P = G @ P @ G.T + Q
        pred_means[t] = x
        pred_covs[t] = P
        nu = Y[t] - H @ x
        innovations[t] = nu
        S = H @ P @ H.T + R
        try:
            L = np.linalg.cholesky(S)
        except np.linalg.LinAlgError:
            S = S + (1e-10 * np.trace(S)) * np.eye(n)
            try:
                L = np.linalg.cholesky(S)
            except np.linalg.LinAlgError:
                raise NumericalError("innovation covariance is not positive "
                                     "definite in the coupled filter") from None
        z = np.linalg.solve(L, nu)
        loglik += -0.5 * (n * _LOG2PI + 2.0 * np.sum(np.log(np.diag(L))) + z @ z)
        Kg = np.linalg.solve(L.T, np.linalg.solve(L, H @ P)).T
        x = x + Kg @ nu
        A = I - Kg @ H
        P = A @ P @ A.T + Kg @ R @ Kg.T
        P = 0.5 * (P + P.T)
        means[t] = x
        covs[t] = P
    return FilterResult(means=means, loglik=float(loglik), innovations=innovations,
                        mode="coupled", model=model, pred_means=pred_means,
                        _covs=covs, _pred_covs=pred_covs, _groups=groups)


@dataclass
class SmootherResult:
    """Fixed-interval smoothed means and covariances."""

    means: np.ndarray
    mode: str
    model: StateSpaceModel
    _covs: object = field(repr=False, default=None)
    _groups: object = field(repr=False, default=None)

    def block_cov(self, k) -> np.ndarray:
        block = self.model.block_index[k]
        if self.mode == "coupled":
            sl = slice(block.offset, block.offset + block.dim)
            return self._covs[:, sl, sl]
        for g, grp in enumerate(self._groups):
            for i, b in enumerate(grp.blocks):
                if b.k == block.k:
                    return self._covs[g][:, i]
        raise KeyError(block.k)

    def cov_matrix(self, t: int) -> np.ndarray:
        if self.mode == "coupled":
            return self._covs[t]
        N = self.model.state_dim
        out = np.zeros((N, N))
        for b in self.model.blocks:
            sl = slice(b.offset, b.offset + b.dim)
            out[sl, sl] = self.block_cov(b.k)[t]
        return out


def _solve_sym(Pp, M):
    """Solve Pp X = M for batches of small symmetric matrices with jitter."""
    try:
        return np.linalg.solve(Pp, M)
    except np.linalg.LinAlgError:
        m = Pp.shape[-1]
        tr = np.maximum(np.trace(Pp, axis1=-2, axis2=-1), 1e-300)
        Pp = Pp + (1e-10 * tr)[..., None, None] * np.eye(m)
        return np.linalg.solve(Pp, M)


def rts_smoother(model: StateSpaceModel, fr: FilterResult) -> SmootherResult:
    """Standard fixed-interval backward pass over the filter output."""
    if fr.model is not model:
        if fr.model.state_dim != model.state_dim or fr.model.dt != model.dt:
            raise ValueError("filter result does not belong to this model")
    K = fr.n_steps
    if fr.mode == "coupled":
        G = np.zeros((model.state_dim,) * 2)
        for b in model.blocks:
            sl = slice(b.offset, b.offset + b.dim)
            G[sl, sl] = b.transition
        xs = fr.means.copy()
        Ps = fr._covs.copy()
        for t in range(K - 2, -1, -1):
            Cmat = _solve_sym(fr._pred_covs[t + 1], G @ fr._covs[t]).T
            xs[t] = fr.means[t] + Cmat @ (xs[t + 1] - fr.pred_means[t + 1])
            Ps[t] = fr._covs[t] + Cmat @ (Ps[t + 1] - fr._pred_covs[t + 1]) @ Cmat.T
            Ps[t] = 0.5 * (Ps[t] + Ps[t].T)
        return SmootherResult(means=xs, mode="coupled", model=model, _covs=Ps)

    xs = fr.means.copy()
    cov_out = [c.copy() for c in fr._covs]
    for gi, g in enumerate(fr._groups):
        idx = (g.offsets[:, None] + np.arange(g.m)[None, :])
        flat = idx.ravel()
        for t in range(K - 2, -1, -1):
            Pf = fr._covs[gi][t]
            Pp = fr._pred_covs[gi][t + 1]
            Cmat = _solve_sym(Pp, g.G @ Pf).transpose(0, 2, 1)
            dx = xs[t + 1, flat].reshape(g.B, g.m) - fr.pred_means[t + 1, flat].reshape(g.B, g.m)
            xs[t, flat] = (fr.means[t, flat].reshape(g.B, g.m)
                           + np.einsum("bij,bj->bi", Cmat, dx)).ravel()
            dP = cov_out[gi][t + 1] - Pp
            Pnew = Pf + Cmat @ dP @ Cmat.transpose(0, 2, 1)
            cov_out[gi][t] = 0.5 * (Pnew + Pnew.transpose(0, 2, 1))
    return SmootherResult(means=xs, mode="decoupled", model=model,
                          _covs=cov_out, _groups=fr._groups)


def reconstruct_fields(model: StateSpaceModel, coeffs) -> FieldPair:
    """Map one stacked state vector to the field and its time derivative."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (model.state_dim,):
        raise ValueError(f"state vector must have shape ({model.state_dim},)")
    B = model.basis.matrix
    value = B @ coeffs[model.alpha_indices()]
    deriv = B @ coeffs[model.beta_indices()]
    return FieldPair(value_field=value, derivative_field=deriv)


def modal_amplitude(result, k, which: str = "alpha") -> np.ndarray:
    """Per-step Euclidean magnitude of the (R, I) coefficient pair at k.

    Corner modes carry a single coefficient, so the amplitude is its
    absolute value.
    """
    model = result.model
    if tuple(k) not in model.block_index:
        raise KeyError(f"wavenumber {tuple(k)} is not part of the model")
    block = model.block_index[tuple(k)]
    local = block.alpha_idx if which == "alpha" else block.beta_idx
    if which not in ("alpha", "beta"):
        raise ValueError("which must be 'alpha' or 'beta'")
    series = result.means[:, [block.offset + i for i in local]]
    return np.sqrt(np.einsum("ti,ti->t", series, series))
