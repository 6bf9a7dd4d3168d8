"""Finite-dimensional state-space construction.

Each wavenumber contributes an independent block: corner modes a 2x2 system
over (alpha, beta), paired modes a 4x4 system over (alphaR, betaR, alphaI,
betaI), where the alpha coefficients carry the field and the beta
coefficients its time derivative.  Process noise is rank-one per shock
channel: one scalar Gaussian feeds both the alpha and beta rows of a channel,
scaled by the square roots of the time-integral moments m1 and m2.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .basis import (BasisMatrix, BasisMode, WavenumberSets, basis_matrix,
                    mode_rates, mode_rates_omega, noise_weight_table)
from .core import GridSpec, PhysicalParams


@dataclass(frozen=True)
class NoiseMoments:
    """Time-integral moments of the one-step propagated noise.

    m1 = dt^3/3, m12 = dt^2/2 + dt^3/3, m2 = dt + dt^2 + dt^3/3.
    """

    m1: float
    m12: float
    m2: float


def noise_moments(dt: float) -> NoiseMoments:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    return NoiseMoments(m1=dt ** 3 / 3.0,
                        m12=dt ** 2 / 2.0 + dt ** 3 / 3.0,
                        m2=dt + dt ** 2 + dt ** 3 / 3.0)


def exact_noise_block(dt: float) -> np.ndarray:
    """One-step noise covariance pattern [[m1, m12], [m12, m2]] (spatial factor
    excluded; it is applied per mode at assembly)."""
    m = noise_moments(dt)
    return np.array([[m.m1, m.m12], [m.m12, m.m2]])


def rank1_noise_block(dt: float) -> np.ndarray:
    """Rank-one approximation [[m1, sqrt(m1 m2)], [sqrt(m1 m2), m2]].

    Shares the exact block's diagonal; determinant is zero by construction.
    """
    m = noise_moments(dt)
    c = np.sqrt(m.m1 * m.m2)
    return np.array([[m.m1, c], [c, m.m2]])


def rank1_offdiag_gap(dt: float) -> float:
    """sqrt(m1 m2) - m12, the off-diagonal error of the rank-one block; O(dt^2)."""
    m = noise_moments(dt)
    return float(np.sqrt(m.m1 * m.m2) - m.m12)


def transition_block_complex(omega, dt: float, p: PhysicalParams) -> np.ndarray:
    """Complex one-step transition [[1, dt], [-lambda dt, 1-dt]] at angular
    frequency omega, lambda = decay + i rotation."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    lam = mode_rates_omega(omega, p).eigenvalue
    return np.array([[1.0, dt], [-lam * dt, 1.0 - dt]], dtype=complex)


def transition_block(k, tag: str, dt: float, p: PhysicalParams) -> np.ndarray:
    """Real one-step transition for wavenumber k.

    Corner modes rotate nothing and use only the decay rate; paired modes
    couple the (R, I) pairs through the rotation rate.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    r = mode_rates(k, p)
    a, b = r.decay, r.rotation
    if tag == "corner":
        return np.array([[1.0, dt], [-a * dt, 1.0 - dt]])
    if tag == "paired":
        return np.array([
            [1.0,       dt,       0.0,      0.0],
            [-a * dt,   1.0 - dt, -b * dt,  0.0],
            [0.0,       0.0,      1.0,      dt],
            [b * dt,    0.0,      -a * dt,  1.0 - dt],
        ])
    raise ValueError(f"unknown block tag {tag!r}")


@dataclass(frozen=True)
class ModelBlock:
    """One wavenumber's independent subsystem.

    offset : start of the block inside the stacked state vector
    alpha_idx / beta_idx : local positions of the field / derivative
        coefficients, aligned with ``cols`` (basis columns of the mode)
    shock_matrix : (m, n_channels) map from iid standard normals to one-step
        process noise; ``noise_cov = shock_matrix @ shock_matrix.T``
    """

    k: tuple
    tag: str
    transition: np.ndarray
    shock_matrix: np.ndarray
    offset: int
    alpha_idx: tuple
    beta_idx: tuple
    cols: tuple

    @property
    def dim(self) -> int:
        return self.transition.shape[0]

    @cached_property
    def noise_cov(self) -> np.ndarray:
        return self.shock_matrix @ self.shock_matrix.T


@dataclass(frozen=True)
class FieldPair:
    """A field and its time derivative on the same grid, flattened."""

    value_field: np.ndarray
    derivative_field: np.ndarray


@dataclass(frozen=True)
class StateSpaceModel:
    """Block-diagonal linear-Gaussian model over modal coefficients.

    blocks are ordered corner-first then paired, lexicographically within
    each group.  ``basis`` holds exactly the columns of the kept modes, so
    ``obs_map`` routes basis columns to alpha positions and zeros elsewhere.
    """

    blocks: tuple
    basis: BasisMatrix
    grid: GridSpec
    dt: float
    state_dim: int
    kind: str = "proposed"

    @cached_property
    def block_index(self) -> dict:
        return {b.k: b for b in self.blocks}

    @cached_property
    def obs_map(self) -> np.ndarray:
        n = self.basis.matrix.shape[0]
        H = np.zeros((n, self.state_dim))
        for b in self.blocks:
            for local, col in zip(b.alpha_idx, b.cols):
                H[:, b.offset + local] = self.basis.matrix[:, col]
        return H

    @property
    def n_shock_channels(self) -> int:
        return sum(b.shock_matrix.shape[1] for b in self.blocks)

    def alpha_indices(self) -> np.ndarray:
        """Stacked state indices of all alpha coefficients, in basis column order."""
        idx = np.empty(self.basis.J, dtype=int)
        for b in self.blocks:
            for local, col in zip(b.alpha_idx, b.cols):
                idx[col] = b.offset + local
        return idx

    def beta_indices(self) -> np.ndarray:
        """Stacked state indices of all beta coefficients, in basis column order."""
        idx = np.empty(self.basis.J, dtype=int)
        for b in self.blocks:
            for local, col in zip(b.beta_idx, b.cols):
                idx[col] = b.offset + local
        return idx


def _truncate(sets: WavenumberSets, lowpass) -> tuple:
    def keep(k):
        return lowpass is None or max(abs(k[0]), abs(k[1])) <= lowpass
    return tuple(k for k in sets.corner if keep(k)), tuple(k for k in sets.paired if keep(k))


def build_model(grid: GridSpec, sets: WavenumberSets, p: PhysicalParams,
                dt: float, lowpass: int = None) -> StateSpaceModel:
    """Assemble the block-diagonal model on a grid.

    ``lowpass`` optionally keeps only modes with max(|k1|, |k2|) <= lowpass;
    the default keeps the full basis.
    """
    if (sets.n1, sets.n2) != (grid.n1, grid.n2):
        raise ValueError("wavenumber sets do not match the grid")
    mom = noise_moments(dt)
    table = noise_weight_table(grid, p)
    corner, paired = _truncate(sets, lowpass)
    full = basis_matrix(grid, sets)
    full_modes = full.mode_index()

    blocks = []
    kept_modes = []
    kept_cols = []
    gram = []
    offset = 0
    col_at = 0
    sm1, sm2 = np.sqrt(mom.m1), np.sqrt(mom.m2)
    for k in corner:
        q = p.noise_scale * float(table[k[0] % grid.n1, k[1] % grid.n2])
        shock = np.array([[sm1], [sm2]]) * np.sqrt(q)
        blocks.append(ModelBlock(
            k=k, tag="corner", transition=transition_block(k, "corner", dt, p),
            shock_matrix=shock, offset=offset, alpha_idx=(0,), beta_idx=(1,),
            cols=(col_at,)))
        mode = full_modes[k]
        kept_modes.append(BasisMode(k=k, tag="corner", cols=(col_at,), carrier=mode.carrier))
        kept_cols.append(full.matrix[:, mode.cols[0]])
        gram.append(full.gram[mode.cols[0]])
        offset += 2
        col_at += 1
    for k in paired:
        q = p.noise_scale * float(table[k[0] % grid.n1, k[1] % grid.n2])
        zr = zi = 0.5 * q
        shock = np.zeros((4, 2))
        shock[0, 0] = sm1 * np.sqrt(zr)
        shock[1, 0] = sm2 * np.sqrt(zr)
        shock[2, 1] = sm1 * np.sqrt(zi)
        shock[3, 1] = sm2 * np.sqrt(zi)
        blocks.append(ModelBlock(
            k=k, tag="paired", transition=transition_block(k, "paired", dt, p),
            shock_matrix=shock, offset=offset, alpha_idx=(0, 2), beta_idx=(1, 3),
            cols=(col_at, col_at + 1)))
        mode = full_modes[k]
        kept_modes.append(BasisMode(k=k, tag="paired", cols=(col_at, col_at + 1)))
        kept_cols.append(full.matrix[:, mode.cols[0]])
        kept_cols.append(full.matrix[:, mode.cols[1]])
        gram.extend([full.gram[mode.cols[0]], full.gram[mode.cols[1]]])
        offset += 4
        col_at += 2
    mat = np.column_stack(kept_cols)
    mat.setflags(write=False)
    basis = BasisMatrix(matrix=mat, modes=tuple(kept_modes), J=mat.shape[1],
                        gram=np.asarray(gram))
    return StateSpaceModel(blocks=tuple(blocks), basis=basis, grid=grid, dt=dt,
                           state_dim=offset)
