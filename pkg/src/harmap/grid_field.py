"""Periodic grids on the flat torus and pseudospectral calculus on them.

Field layout convention used across the package: tensor component axes come
first, grid axes last. A covariant rank-p field on an n-dimensional grid is an
array of shape ``(n,) * p + grid.shape``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft

TWO_PI = 2.0 * np.pi
TAIL_WARN = 1e-8


def _workers():
    value = os.environ.get("HARMAP_THREADS")
    if not value:
        return None
    try:
        return max(1, int(value))
    except ValueError:
        return None


@dataclass(frozen=True)
class Grid:
    """Uniform grid on the torus [0, 2pi)^dim."""

    dim: int
    resolution: tuple[int, ...]

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"grid dimension must be 2 or 3, got {self.dim}")
        res = self.resolution
        if isinstance(res, (int, np.integer)):
            res = (int(res),) * self.dim
        res = tuple(int(r) for r in res)
        if len(res) != self.dim:
            raise ValueError(f"expected {self.dim} resolutions, got {len(res)}")
        for r in res:
            if r < 8 or r % 2:
                raise ValueError(f"per-axis resolution must be even and >= 8, got {r}")
        object.__setattr__(self, "resolution", res)

    @classmethod
    def default(cls, dim):
        return cls(dim, 32 if dim == 2 else 24)

    @property
    def shape(self):
        return self.resolution

    @property
    def npoints(self):
        return int(np.prod(self.resolution))

    @property
    def cell_volume(self):
        return float(np.prod([TWO_PI / r for r in self.resolution]))

    @property
    def volume(self):
        return TWO_PI**self.dim

    def axis_nodes(self, axis):
        n = self.resolution[axis]
        return TWO_PI * np.arange(n) / n

    @cached_property
    def coords(self):
        """Node coordinates, shape ``(dim,) + shape``."""
        axes = [self.axis_nodes(a) for a in range(self.dim)]
        return np.array(np.meshgrid(*axes, indexing="ij"))

    def wavenumbers(self, axis, nyquist=True):
        n = self.resolution[axis]
        k = np.fft.fftfreq(n, 1.0 / n)
        if not nyquist:
            k[n // 2] = 0.0
        return k

    def _grid_axis(self, f, axis):
        return f.ndim - self.dim + axis

    def check(self, f):
        f = np.asarray(f)
        if f.shape[f.ndim - self.dim:] != self.shape:
            raise ValueError(f"field trailing shape {f.shape} does not match grid {self.shape}")
        return f

    def diff(self, f, axis):
        """Spectral partial derivative of every component along ``axis``."""
        if not 0 <= axis < self.dim:
            raise ValueError(f"axis {axis} out of range for dimension {self.dim}")
        f = self.check(f)
        ax = self._grid_axis(f, axis)
        n = self.resolution[axis]
        k = np.arange(n // 2 + 1, dtype=float)
        k[-1] = 0.0  # odd derivative: drop the Nyquist mode
        shape = [1] * f.ndim
        shape[ax] = k.size
        fh = scipy.fft.rfft(f, axis=ax, workers=_workers())
        fh *= 1j * k.reshape(shape)
        return scipy.fft.irfft(fh, n=n, axis=ax, workers=_workers())

    def gradient(self, f):
        """All partial derivatives stacked on a new leading axis."""
        return np.stack([self.diff(f, a) for a in range(self.dim)])

    def integrate(self, f, vol=None):
        f = self.check(f)
        if vol is not None:
            vol = self.check(vol)
            if np.any(vol <= 0):
                idx = tuple(int(v) for v in np.unravel_index(np.argmin(vol), vol.shape))
                raise ValueError(f"volume density not positive at node {idx}: {vol[idx]}")
            f = f * vol
        return self.cell_volume * f.sum(axis=tuple(range(f.ndim - self.dim, f.ndim)))

    def fft(self, f):
        f = self.check(f)
        axes = tuple(range(f.ndim - self.dim, f.ndim))
        return scipy.fft.fftn(f, axes=axes, workers=_workers())

    def normalized_radius(self):
        ks = np.meshgrid(*[self.wavenumbers(a) / (self.resolution[a] // 2)
                           for a in range(self.dim)], indexing="ij")
        return np.sqrt(sum(k * k for k in ks) / self.dim)

    def interpolate(self, f, points):
        """Trigonometric interpolation of grid field(s) at arbitrary points.

        ``points`` has shape ``(dim, ...)``; coordinates are taken mod 2pi.
        Direct Fourier-series evaluation, so meant for desk-scale grids.
        """
        f = self.check(f)
        nlead = f.ndim - self.dim
        lead = f.shape[:nlead]
        coeffs = self.fft(f) / self.npoints
        wave = []
        for a in range(self.dim):
            n = self.resolution[a]
            ax = nlead + a
            # split the Nyquist coefficient between +N/2 and -N/2
            nyq = coeffs.take([n // 2], axis=ax) * 0.5
            coeffs = np.concatenate([coeffs.take(range(0, n // 2), axis=ax), nyq, nyq,
                                     coeffs.take(range(n // 2 + 1, n), axis=ax)], axis=ax)
            wave.append(np.concatenate([np.arange(0, n // 2 + 1), [-(n // 2)],
                                        np.arange(n // 2 + 1, n) - n]))
        pts = np.mod(np.asarray(points, dtype=float), TWO_PI)
        out_shape = pts.shape[1:]
        pts = pts.reshape(self.dim, -1)
        letters = "abc"[: self.dim]
        phases = [np.exp(1j * np.outer(pts[a], wave[a])) for a in range(self.dim)]
        result = np.einsum(f"...{letters},p{letters[0]}->...p{letters[1:]}", coeffs, phases[0])
        for a in range(1, self.dim):
            rest = letters[a:]
            result = np.einsum(f"...p{rest},p{rest[0]}->...p{rest[1:]}", result, phases[a])
        return result.real.reshape(lead + out_shape)


@dataclass
class TensorField:
    """A typed field carrier: values plus rank and symmetry metadata.

    Numerical routines operate on the bare ``values`` arrays; this wrapper is
    for validation and serialization at API boundaries.
    """

    grid: Grid
    values: np.ndarray
    covariant: int = 0
    contravariant: int = 0
    symmetry: str = "none"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        rank = self.covariant + self.contravariant
        expected = (self.grid.dim,) * rank + self.grid.shape
        if self.values.shape != expected:
            raise ValueError(f"values shape {self.values.shape}, expected {expected}")
        if self.symmetry not in ("none", "sym-last-two", "sym-all"):
            raise ValueError(f"unknown symmetry flag {self.symmetry!r}")
        if self.symmetry == "sym-last-two" and rank >= 2:
            v = self.values
            if not np.array_equal(v, np.swapaxes(v, rank - 2, rank - 1)):
                raise ValueError("values are not symmetric in the last two slots")
        if self.symmetry == "sym-all" and rank >= 2:
            for s in range(rank - 1):
                if not np.array_equal(self.values, np.swapaxes(self.values, s, s + 1)):
                    raise ValueError("values are not totally symmetric")

    @property
    def rank(self):
        return self.covariant + self.contravariant

    def compress(self):
        """Upper-triangular storage for symmetric rank-2 fields."""
        if self.rank != 2 or self.symmetry == "none":
            return self.values.copy()
        i, j = np.triu_indices(self.grid.dim)
        return self.values[i, j]

    @classmethod
    def expand(cls, grid, packed, covariant=2):
        n = grid.dim
        i, j = np.triu_indices(n)
        values = np.zeros((n, n) + grid.shape)
        values[i, j] = packed
        values[j, i] = packed
        return cls(grid, values, covariant=covariant, symmetry="sym-all")


@dataclass(frozen=True)
class SpectralDiagnostics:
    tail_fraction: float
    warnings: tuple = field(default=())


def partial_derivative(f, axis, grid):
    return grid.diff(f, axis)


def integrate(f, grid, vol=None):
    """Trapezoidal (spectrally exact) quadrature of a scalar field."""
    return float(grid.integrate(f, vol))


def spectral_diagnostics(f, grid, threshold=TAIL_WARN):
    f = grid.check(f)
    power = np.abs(grid.fft(f)) ** 2
    lead = tuple(range(f.ndim - grid.dim))
    if lead:
        power = power.sum(axis=lead)
    total = power.sum()
    if total <= 0:
        return SpectralDiagnostics(0.0)
    radius = grid.normalized_radius()
    cut = np.quantile(radius, 2.0 / 3.0)
    tail = float(power[radius > cut].sum() / total)
    warns = ()
    if tail > threshold:
        warns = (f"spectral tail fraction {tail:.3e} exceeds {threshold:.0e}",)
    return SpectralDiagnostics(min(max(tail, 0.0), 1.0), warns)


def contract_full(a, b, g_inv, rank):
    """Pointwise g(a, b) for covariant rank-``rank`` fields."""
    if rank == 0:
        return a * b
    npts = g_inv.shape[2:]
    gi = np.ascontiguousarray(g_inv).reshape(g_inv.shape[:2] + (-1,))
    raised = np.ascontiguousarray(b).reshape(b.shape[:rank] + (-1,))
    letters = "abcdefgh"[:rank]
    for s in range(rank):
        src = letters[:s] + "y" + letters[s + 1:]
        raised = np.einsum(f"{letters[s]}yz,{src}z->{letters}z", gi, raised)
    flat_a = np.asarray(a).reshape(raised.shape)
    return np.einsum(f"{letters}z,{letters}z->z", flat_a, raised).reshape(npts)


def l2_inner_product(phi, psi, metric, rank=None):
    """<phi, psi> = integral of g(phi, psi) dv_g with all indices contracted."""
    phi = np.asarray(phi)
    psi = np.asarray(psi)
    if phi.shape != psi.shape:
        raise ValueError(f"rank/grid mismatch: {phi.shape} vs {psi.shape}")
    grid = metric.grid
    grid.check(phi)
    if rank is None:
        rank = phi.ndim - grid.dim
    pointwise = contract_full(phi, psi, metric.g_inv, rank)
    return float(grid.integrate(pointwise, metric.sqrt_det))


def l2_norm(phi, metric, rank=None):
    return float(np.sqrt(max(l2_inner_product(phi, phi, metric, rank), 0.0)))
