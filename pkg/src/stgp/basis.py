"""Real-valued Fourier machinery on the periodic grid.

Wavenumber bookkeeping splits the spectrum into four self-conjugate corner
modes and conjugate-pair representatives.  Corner modes carry a single real
basis function each; on a cell-centered grid the cosine of a single-Nyquist
corner mode vanishes at every cell center, so each corner column stores the
carrier (cosine or sine) that actually survives sampling.  Paired modes carry
a cosine and a sine column, both scaled by 2 to match the coefficient
convention of the state-space representation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import GridSizeError, GridSpec, PhysicalParams


@dataclass(frozen=True)
class WavenumberSets:
    """Integer wavenumber index sets for an n1 x n2 grid.

    corner : the four self-conjugate modes {(0,0), (0,n2/2), (n1/2,0), (n1/2,n2/2)}
    paired : one representative per remaining conjugate pair
    """

    corner: tuple
    paired: tuple
    n1: int
    n2: int

    def __post_init__(self):
        expected = {(0, 0), (0, self.n2 // 2), (self.n1 // 2, 0),
                    (self.n1 // 2, self.n2 // 2)}
        if set(self.corner) != expected or len(self.corner) != 4:
            raise ValueError("corner set must hold exactly the four self-conjugate modes")
        if set(self.corner) & set(self.paired):
            raise ValueError("corner and paired sets must be disjoint")
        if len(self.corner) + 2 * len(self.paired) != self.n1 * self.n2:
            raise ValueError("mode count must equal the number of grid cells")


def wavenumber_sets(n1: int, n2: int) -> WavenumberSets:
    """Enumerate corner and paired wavenumbers for an even n1 x n2 grid."""
    if n1 <= 0 or n2 <= 0 or n1 % 2 or n2 % 2:
        raise GridSizeError(f"wavenumber sets need even positive dims, got {n1} x {n2}")
    corner = [(0, 0), (0, n2 // 2), (n1 // 2, 0), (n1 // 2, n2 // 2)]
    quadrant = {(k1, k2) for k1 in range(n1 // 2 + 1) for k2 in range(n2 // 2 + 1)}
    lower = {(k1, k2) for k1 in range(1, n1 // 2) for k2 in range(-1, -(n2 // 2 - 1) - 1, -1)}
    paired = sorted((quadrant | lower) - set(corner))
    return WavenumberSets(corner=tuple(sorted(corner)), paired=tuple(paired), n1=n1, n2=n2)


def _nyquist_axes(k, n1: int, n2: int) -> int:
    return int(k[0] % n1 == n1 // 2 and n1 // 2 > 0) + int(k[1] % n2 == n2 // 2 and n2 // 2 > 0)


def corner_carrier(k, n1: int, n2: int) -> str:
    """Real carrier of a self-conjugate mode that is nonzero at cell centers.

    With an odd number of Nyquist axes the complex mode is purely imaginary at
    cell centers, so the sine survives instead of the cosine.
    """
    return "sin" if _nyquist_axes(k, n1, n2) % 2 else "cos"


@dataclass(frozen=True)
class BasisMode:
    """Column bookkeeping for one wavenumber block of the basis matrix."""

    k: tuple
    tag: str                 # "corner" | "paired"
    cols: tuple              # column indices inside the basis matrix
    carrier: str = "cos"     # corner modes only


@dataclass(frozen=True)
class BasisMatrix:
    """Maps per-mode coefficients to grid values of the field.

    Columns follow the block order: corner modes (one column each, factor 1)
    then paired modes (cosine column, sine column, each carrying factor 2).
    ``gram`` holds the exact diagonal of ``matrix.T @ matrix``.
    """

    matrix: np.ndarray
    modes: tuple
    J: int
    gram: np.ndarray

    def mode_index(self) -> dict:
        return {m.k: m for m in self.modes}


def basis_matrix(grid: GridSpec, sets: WavenumberSets) -> BasisMatrix:
    """Evaluate the real Fourier basis on the grid's cell centers."""
    if (sets.n1, sets.n2) != (grid.n1, grid.n2):
        raise ValueError(
            f"wavenumber sets built for {sets.n1} x {sets.n2}, grid is {grid.n1} x {grid.n2}")
    n = grid.n_cells
    s = grid.locations / grid.extent
    cols = []
    modes = []
    gram = []
    for k in sets.corner:
        phase = 2.0 * np.pi * (s @ np.asarray(k, dtype=float))
        carrier = corner_carrier(k, grid.n1, grid.n2)
        col = np.cos(phase) if carrier == "cos" else np.sin(phase)
        modes.append(BasisMode(k=k, tag="corner", cols=(len(cols),), carrier=carrier))
        cols.append(col)
        gram.append(float(n))
    for k in sets.paired:
        phase = 2.0 * np.pi * (s @ np.asarray(k, dtype=float))
        modes.append(BasisMode(k=k, tag="paired", cols=(len(cols), len(cols) + 1)))
        cols.append(2.0 * np.cos(phase))
        cols.append(2.0 * np.sin(phase))
        gram.extend([2.0 * n, 2.0 * n])
    mat = np.column_stack(cols)
    mat.setflags(write=False)
    return BasisMatrix(matrix=mat, modes=tuple(modes), J=mat.shape[1],
                       gram=np.asarray(gram))


@dataclass(frozen=True)
class ModeRates:
    """Per-mode rates of the spatial operator acting on the Fourier pair.

    decay : eta + 2 pi^2 k' Sigma k  (1/time), always >= eta
    rotation : 2 pi k' mu            (1/time)
    """

    decay: float
    rotation: float

    @property
    def eigenvalue(self) -> complex:
        return complex(self.decay, self.rotation)


def mode_rates_omega(omega, p: PhysicalParams) -> ModeRates:
    """Rates at angular spatial frequency omega: decay eta + w'Sw/2, rotation w'mu."""
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    a = p.eta + 0.5 * float(np.sum(p.sigma_diag * w * w))
    b = float(np.sum(p.mu * w))
    return ModeRates(decay=a, rotation=b)


def mode_rates(k, p: PhysicalParams) -> ModeRates:
    """Rates at integer wavenumber k (angular frequency 2 pi k)."""
    return mode_rates_omega(2.0 * np.pi * np.asarray(k, dtype=float), p)


def periodized_noise_cov(h, p: PhysicalParams, extent: float = 1.0, images: int = None) -> float:
    """Driving-noise covariance summed over periodic images of the domain.

    Image summation (rather than wrapping to the nearest image) keeps the
    discrete spectrum of the kernel non-negative on every grid.
    """
    h = np.atleast_1d(np.asarray(h, dtype=float))
    if images is None:
        images = _image_radius(p, extent)
    from .covariance import noise_covariance
    rng = np.arange(-images, images + 1) * extent
    if h.size == 1:
        return float(sum(noise_covariance(h + m, p) for m in rng))
    total = 0.0
    for m1 in rng:
        for m2 in rng:
            total += noise_covariance(h + np.array([m1, m2]), p)
    return float(total)


def _image_radius(p: PhysicalParams, extent: float) -> int:
    sigma_max = float(np.sqrt(np.max(p.noise_shape_diag)))
    return max(1, int(np.ceil(9.0 * sigma_max / extent)))


def _periodized_kernel_table(grid: GridSpec, p: PhysicalParams) -> np.ndarray:
    """Periodized noise kernel sampled at all lattice difference vectors.

    The Gaussian kernel is separable, so the image sum factorizes per axis.
    """
    r = _image_radius(p, grid.extent)
    d1 = np.arange(grid.n1) / grid.n1 * grid.extent
    d2 = np.arange(grid.n2) / grid.n2 * grid.extent
    shifts = np.arange(-r, r + 1) * grid.extent
    h1 = (d1[:, None] + shifts[None, :]).ravel()
    h2 = (d2[:, None] + shifts[None, :]).ravel()
    inv_phi = 1.0 / p.noise_shape_diag
    norm = (2.0 * np.pi) ** (-1.0) / np.sqrt(np.prod(p.noise_shape_diag))
    g1 = np.exp(-0.5 * inv_phi[0] * h1 * h1).reshape(grid.n1, -1)
    g2 = np.exp(-0.5 * inv_phi[1] * h2 * h2).reshape(grid.n2, -1)
    return norm * np.outer(g1.sum(axis=1), g2.sum(axis=1))


def noise_weight_table(grid: GridSpec, p: PhysicalParams) -> np.ndarray:
    """Spectral weights of the periodized driving-noise kernel, noise_scale applied.

    Entry [k1 % n1, k2 % n2] is the variance weight of the complex mode k; the
    table is real, symmetric and non-negative up to image-truncation roundoff.
    """
    table = _periodized_kernel_table(grid, p)
    q = np.fft.fft2(table).real / grid.n_cells
    # tails of the image sum can leave harmless -1e-18 residue
    return np.maximum(q, 0.0) * p.noise_scale


def process_noise_weights(k, p: PhysicalParams, grid: GridSpec,
                          table: np.ndarray = None) -> tuple[float, float]:
    """Variance weights of the independent amplitudes driving mode k.

    Returned in basis column order (first column, second column), matching the
    factor-2 paired-column convention; a corner mode has a single column and
    carries all weight there.
    """
    if table is None:
        table = noise_weight_table(grid, p)
    q = float(table[k[0] % grid.n1, k[1] % grid.n2])
    sets_corner = {(0, 0), (0, grid.n2 // 2), (grid.n1 // 2, 0), (grid.n1 // 2, grid.n2 // 2)}
    if (k[0] % grid.n1, k[1] % grid.n2) in sets_corner:
        return q, 0.0
    return 0.5 * q, 0.5 * q
