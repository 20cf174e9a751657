"""Standard metric fixtures and seeded band-limited random fields."""

from __future__ import annotations

import itertools

import numpy as np

from .geometry import MetricField
from .grid_field import Grid

MAX_WAVENUMBER = 4


def random_scalar(grid: Grid, rng, kmax=MAX_WAVENUMBER, amplitude=1.0):
    """Real trigonometric polynomial with all |k_a| <= kmax, unit RMS."""
    coeffs = np.zeros(grid.shape, dtype=complex)
    band = tuple(np.r_[0:kmax + 1, -kmax:0] % n for n in grid.shape)
    sub = np.ix_(*band)
    coeffs[sub] = rng.standard_normal(coeffs[sub].shape) + 1j * rng.standard_normal(coeffs[sub].shape)
    out = np.fft.ifftn(coeffs).real
    rms = np.sqrt(np.mean(out**2))
    return amplitude * out / rms if rms > 0 else out


def random_field(grid: Grid, rng, rank, symmetric=True, kmax=MAX_WAVENUMBER):
    n = grid.dim
    shape = (n,) * rank
    out = np.zeros(shape + grid.shape)
    for idx in itertools.product(range(n), repeat=rank):
        if symmetric and list(idx) != sorted(idx):
            continue
        comp = random_scalar(grid, rng, kmax)
        for perm in (set(itertools.permutations(idx)) if symmetric else {idx}):
            out[perm] = comp
    return out


def flat(dim, resolution=None):
    grid = Grid(dim, resolution or (32 if dim == 2 else 24))
    return MetricField.flat(grid)


def conformal_t2(resolution=32, amplitude=0.1):
    """g = exp(2u) delta on T^2 with u = amplitude * sin(x1)."""
    grid = Grid(2, resolution)
    return MetricField.conformal(grid, amplitude * np.sin(grid.coords[0]))


def bump_t3(resolution=24, amplitude=0.1):
    """delta + amplitude * h on T^3, h a fixed symmetric trig polynomial (|k| <= 2)."""
    grid = Grid(3, resolution)
    x1, x2, x3 = grid.coords
    h = np.zeros((3, 3) + grid.shape)
    h[0, 0] = np.sin(x2) + 0.5 * np.cos(x3)
    h[1, 1] = np.cos(x1 + x3)
    h[2, 2] = 0.5 * np.sin(x1) - np.cos(x2)
    h[0, 1] = h[1, 0] = 0.5 * np.sin(x3) * np.cos(x2)
    h[1, 2] = h[2, 1] = 0.3 * np.cos(2 * x1)
    h[0, 2] = h[2, 0] = 0.4 * np.sin(x2 + x3)
    return MetricField(grid, np.eye(3).reshape(3, 3, 1, 1, 1) + amplitude * h)


def random_metric(grid: Grid, rng, amplitude=0.1, kmax=2):
    """Flat metric plus a small random band-limited symmetric perturbation."""
    pert = random_field(grid, rng, 2, kmax=kmax)
    pert /= np.abs(pert).max()
    eye = np.eye(grid.dim).reshape((grid.dim, grid.dim) + (1,) * grid.dim)
    return MetricField(grid, eye + amplitude * pert)


def default_fixtures():
    """The named metric fixtures exercised by the acceptance suite."""
    return {
        "flat_t2": flat(2),
        "flat_t3": flat(3),
        "conformal_t2": conformal_t2(),
        "bump_t3": bump_t3(),
    }
