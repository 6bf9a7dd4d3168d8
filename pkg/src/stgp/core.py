"""Core domain records: physical parameters, spatial grid, space-time data cube."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class StgpError(Exception):
    """Base class for errors raised by this package."""


class GridSizeError(StgpError, ValueError):
    """Grid dimensions are odd, non-positive or otherwise unusable."""


class DataFormatError(StgpError, ValueError):
    """A file or in-memory record violates its format contract."""


class NumericalError(StgpError, RuntimeError):
    """A numerical routine failed (non-PSD covariance, blow-up, ...)."""


class EstimationError(StgpError, RuntimeError):
    """Maximum-likelihood estimation could not produce a usable result."""


@dataclass(frozen=True)
class PhysicalParams:
    """Parameters of the advection-diffusion-decay process.

    mu : advection velocity, length-d (domain-units/time)
    sigma_diag : diagonal of the diffusion matrix, length-d, > 0
    eta : decay rate, > 0 (1/time)
    noise_shape_diag : diagonal of the driving-noise spatial shape, length-d, > 0
    noise_scale : overall process-noise variance multiplier, > 0.  The
        closed-form spectrum helpers report unit-scale values; the multiplier
        is applied wherever process noise enters a model or simulation.
    """

    mu: np.ndarray
    sigma_diag: np.ndarray
    eta: float
    noise_shape_diag: np.ndarray
    noise_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "mu", np.atleast_1d(np.asarray(self.mu, dtype=float)))
        object.__setattr__(self, "sigma_diag", np.atleast_1d(np.asarray(self.sigma_diag, dtype=float)))
        object.__setattr__(self, "noise_shape_diag", np.atleast_1d(np.asarray(self.noise_shape_diag, dtype=float)))
        d = self.mu.size
        if d not in (1, 2):
            raise ValueError(f"spatial dimension must be 1 or 2, got {d}")
        if self.sigma_diag.size != d or self.noise_shape_diag.size != d:
            raise ValueError("mu, sigma_diag and noise_shape_diag must share one length")
        if not (np.all(self.sigma_diag > 0) and np.all(self.noise_shape_diag > 0)):
            raise ValueError("sigma_diag and noise_shape_diag must be strictly positive")
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if not self.noise_scale > 0:
            raise ValueError("noise_scale must be positive")

    @property
    def d(self) -> int:
        return self.mu.size

    def replace(self, **kw) -> "PhysicalParams":
        vals = dict(mu=self.mu, sigma_diag=self.sigma_diag, eta=self.eta,
                    noise_shape_diag=self.noise_shape_diag, noise_scale=self.noise_scale)
        vals.update(kw)
        return PhysicalParams(**vals)


@dataclass(frozen=True)
class GridSpec:
    """Regular n1 x n2 grid of cell centers on a periodic square domain.

    Rows of ``locations`` are ordered i-major (the second axis index j runs
    fastest), matching ``flatten``.
    """

    n1: int
    n2: int
    extent: float = 1.0
    locations: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n1 <= 0 or self.n2 <= 0 or self.n1 % 2 or self.n2 % 2:
            raise GridSizeError(
                f"grid dimensions must be positive and even, got {self.n1} x {self.n2}")
        if not self.extent > 0:
            raise GridSizeError(f"extent must be positive, got {self.extent}")
        i = np.arange(self.n1)
        j = np.arange(self.n2)
        s1 = (i + 0.5) / self.n1 * self.extent
        s2 = (j + 0.5) / self.n2 * self.extent
        locs = np.empty((self.n1 * self.n2, 2))
        locs[:, 0] = np.repeat(s1, self.n2)
        locs[:, 1] = np.tile(s2, self.n1)
        locs.setflags(write=False)
        object.__setattr__(self, "locations", locs)

    @property
    def n_cells(self) -> int:
        return self.n1 * self.n2

    @property
    def spacing(self) -> tuple[float, float]:
        return self.extent / self.n1, self.extent / self.n2

    def flatten(self, i: int, j: int) -> int:
        return i * self.n2 + j

    def unflatten(self, idx: int) -> tuple[int, int]:
        return divmod(idx, self.n2)


def make_grid(n1: int, n2: int, extent: float = 1.0) -> GridSpec:
    """Build a cell-centered grid; dimensions must be even and positive."""
    return GridSpec(n1=n1, n2=n2, extent=extent)


@dataclass(frozen=True)
class SpaceTimeCube:
    """Frames of a scalar field on a regular grid with time metadata.

    frames : (K, n1*n2) array, one flattened field per row
    dt : frame spacing
    t0 : time of the first frame
    """

    grid: GridSpec
    dt: float
    frames: np.ndarray
    t0: float = 0.0

    def __post_init__(self):
        fr = np.asarray(self.frames, dtype=float)
        if fr.ndim != 2 or fr.shape[1] != self.grid.n_cells:
            raise DataFormatError(
                f"frames must be (K, {self.grid.n_cells}), got {fr.shape}")
        if not np.all(np.isfinite(fr)):
            raise DataFormatError("frames contain non-finite values")
        if not self.dt > 0:
            raise DataFormatError("dt must be positive")
        fr = fr.copy()
        fr.setflags(write=False)
        object.__setattr__(self, "frames", fr)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_frames)

    def frame_image(self, t: int) -> np.ndarray:
        """Frame ``t`` reshaped to (n1, n2)."""
        return self.frames[t].reshape(self.grid.n1, self.grid.n2)
