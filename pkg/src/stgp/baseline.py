"""The conventional competing model: spectral decay-rotation propagation of
the field coefficients with an AR(1) growth-decay state added per mode.

The augmented transition is upper-block-triangular, [[G, I], [0, phi I]]:
growth-decay states inject into the field coefficients each step and follow
their own AR(1).  Setting ``ar_coeff = 1`` recovers the pure random-walk
growth variant.  The observation map hits the field coefficients only, so the
filter machinery runs unchanged on these models.
"""

from __future__ import annotations

import numpy as np

from .basis import BasisMatrix, BasisMode, WavenumberSets, basis_matrix, mode_rates, \
    noise_weight_table
from .core import GridSpec, PhysicalParams
from .dynamics import ModelBlock, StateSpaceModel, _truncate


def mode_propagator(k, dt: float, p: PhysicalParams, tag: str = "paired") -> np.ndarray:
    """Exact one-step propagator of a mode: decay times rotation on the
    (R, I) pair; corner modes reduce to the scalar decay factor (1x1)."""
    r = mode_rates(k, p)
    decay = np.exp(-r.decay * dt)
    if tag == "corner":
        return np.array([[decay]])
    if tag != "paired":
        raise ValueError(f"unknown block tag {tag!r}")
    th = r.rotation * dt
    # convention: the complex amplitude alphaR - i alphaI evolves by
    # exp(-(decay + i rotation) dt), matching the spectral integrator
    rot = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    return decay * rot


def _ou_step_var(decay: float, dt: float) -> float:
    """Stationary one-step noise variance of an exact-propagator OU mode with
    unit noise intensity: (1 - exp(-2 a dt)) / (2 a)."""
    return (1.0 - np.exp(-2.0 * decay * dt)) / (2.0 * decay)


def build_baseline(grid: GridSpec, sets: WavenumberSets, p: PhysicalParams,
                   dt: float, ar_coeff: float = 0.95,
                   growth_noise_var: float = 1e-2,
                   lowpass: int = None) -> StateSpaceModel:
    """Assemble the augmented growth-decay model on a grid.

    Per corner mode the block state is (alpha, beta); per paired mode
    (alphaR, alphaI, betaR, betaI).  Field-coefficient noise uses the same
    per-mode spectral weights as the derivative model; growth-decay noise is
    independent with one variance parameter.
    """
    if (sets.n1, sets.n2) != (grid.n1, grid.n2):
        raise ValueError("wavenumber sets do not match the grid")
    if not -1.0 <= ar_coeff <= 1.0:
        raise ValueError("ar_coeff must lie in [-1, 1]")
    if growth_noise_var < 0:
        raise ValueError("growth_noise_var must be non-negative")
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
    sq_beta = np.sqrt(growth_noise_var)
    for k in corner:
        a = mode_rates(k, p).decay
        g = float(np.exp(-a * dt))
        trans = np.array([[g, 1.0], [0.0, ar_coeff]])
        q_alpha = p.noise_scale * float(table[k[0] % grid.n1, k[1] % grid.n2])
        shock = np.diag([np.sqrt(q_alpha * _ou_step_var(a, dt)), sq_beta])
        blocks.append(ModelBlock(
            k=k, tag="corner", transition=trans, shock_matrix=shock,
            offset=offset, alpha_idx=(0,), beta_idx=(1,), cols=(col_at,)))
        mode = full_modes[k]
        kept_modes.append(BasisMode(k=k, tag="corner", cols=(col_at,), carrier=mode.carrier))
        kept_cols.append(full.matrix[:, mode.cols[0]])
        gram.append(full.gram[mode.cols[0]])
        offset += 2
        col_at += 1
    for k in paired:
        r = mode_rates(k, p)
        G2 = mode_propagator(k, dt, p, tag="paired")
        trans = np.zeros((4, 4))
        trans[:2, :2] = G2
        trans[:2, 2:] = np.eye(2)
        trans[2:, 2:] = ar_coeff * np.eye(2)
        q_alpha = 0.5 * p.noise_scale * float(table[k[0] % grid.n1, k[1] % grid.n2])
        s_alpha = np.sqrt(q_alpha * _ou_step_var(r.decay, dt))
        shock = np.diag([s_alpha, s_alpha, sq_beta, sq_beta])
        blocks.append(ModelBlock(
            k=k, tag="paired", transition=trans, shock_matrix=shock,
            offset=offset, alpha_idx=(0, 1), beta_idx=(2, 3), cols=(col_at, col_at + 1)))
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
                           state_dim=offset, kind="baseline")
