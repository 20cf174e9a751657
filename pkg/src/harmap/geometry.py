"""Metrics, Levi-Civita connection and curvature on periodic grids.

Index conventions (all arrays component-first, grid-last):

* ``christoffel[k, i, j]``  = Gamma^k_ij
* ``riemann[l, i, j, k]``   = R^l_ijk with R(d_i, d_j) d_k = R^l_ijk d_l
* ``ricci[j, k]``           = R^i_ijk
* covariant derivatives put the differentiation slot first.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .grid_field import Grid, l2_norm


class GeometryError(ValueError):
    pass


def _sym(a):
    return 0.5 * (a + np.swapaxes(a, 0, 1))


def pointwise_matrices(a, grid):
    """View a rank-2 field ``(n, n) + shape`` as a stack of n x n matrices."""
    n = a.shape[0]
    return np.moveaxis(a.reshape(n, n, -1), 2, 0)


def from_matrices(m, grid):
    n = m.shape[-1]
    return np.moveaxis(m, 0, 2).reshape((n, n) + grid.shape)


def positive_definite_check(phi, grid):
    """Per-node Cholesky test of a symmetric rank-2 field.

    Returns ``(ok, node, eigenvalue)`` where ``node`` is the node with the
    smallest eigenvalue (the worst node) and ``eigenvalue`` that eigenvalue.
    """
    mats = pointwise_matrices(np.asarray(phi), grid)
    if not np.allclose(mats, np.swapaxes(mats, 1, 2), rtol=0, atol=1e-12 * max(1.0, np.abs(mats).max())):
        raise GeometryError("positive_definite_check needs a symmetric field")
    eig = np.linalg.eigvalsh(mats)[:, 0]
    try:
        np.linalg.cholesky(mats)
        chol_ok = True
    except np.linalg.LinAlgError:
        chol_ok = False
    flat = int(np.argmin(eig))
    ok = chol_ok and eig[flat] > 0
    node = tuple(int(v) for v in np.unravel_index(flat, grid.shape))
    return ok, node, float(eig[flat])


def min_eigenvalue(phi, grid):
    return float(np.linalg.eigvalsh(pointwise_matrices(phi, grid))[:, 0].min())


@dataclass(frozen=True)
class CurvatureBundle:
    christoffel: np.ndarray
    riemann: np.ndarray
    ricci: np.ndarray
    scalar: np.ndarray
    einstein: np.ndarray


class MetricField:
    """A positive-definite symmetric 2-tensor field with cached geometry.

    Instances are treated as immutable; build a new one for a new metric.
    """

    def __init__(self, grid: Grid, g):
        g = np.array(g, dtype=float)
        n = grid.dim
        if g.shape != (n, n) + grid.shape:
            raise GeometryError(f"metric shape {g.shape} does not match grid {grid.shape}")
        if not np.array_equal(g, np.swapaxes(g, 0, 1)):
            asym = np.abs(g - np.swapaxes(g, 0, 1)).max()
            if asym > 1e-12 * np.abs(g).max():
                raise GeometryError(f"metric not symmetric (max asymmetry {asym:.3e})")
            g = _sym(g)
        ok, node, eig = positive_definite_check(g, grid)
        if not ok:
            raise GeometryError(f"metric not positive definite at node {node} (eigenvalue {eig:.6g})")
        g.flags.writeable = False
        self.grid = grid
        self.g = g

    @classmethod
    def flat(cls, grid):
        eye = np.eye(grid.dim).reshape((grid.dim, grid.dim) + (1,) * grid.dim)
        return cls(grid, np.broadcast_to(eye, (grid.dim, grid.dim) + grid.shape))

    @classmethod
    def conformal(cls, grid, u):
        """e^{2u} times the flat metric."""
        return cls(grid, np.exp(2 * u) * np.eye(grid.dim).reshape((grid.dim, grid.dim) + (1,) * grid.dim))

    @property
    def dim(self):
        return self.grid.dim

    def __repr__(self):
        return f"MetricField(dim={self.dim}, resolution={self.grid.resolution})"

    @cached_property
    def _mats(self):
        return pointwise_matrices(self.g, self.grid)

    @cached_property
    def g_inv(self):
        inv = np.linalg.inv(self._mats)
        inv = 0.5 * (inv + np.swapaxes(inv, 1, 2))
        return from_matrices(inv, self.grid)

    @cached_property
    def det(self):
        return np.linalg.det(self._mats).reshape(self.grid.shape)

    @cached_property
    def sqrt_det(self):
        return np.sqrt(self.det)

    @cached_property
    def frame(self):
        """Orthonormal frame E (per node, columns are vectors): E^T g E = I.

        Built from the Cholesky factor g = L L^T as E = L^{-T}.
        """
        lower = np.linalg.cholesky(self._mats)
        return np.swapaxes(np.linalg.inv(lower), 1, 2)

    @cached_property
    def volume(self):
        return float(self.grid.integrate(np.ones(self.grid.shape), self.sqrt_det))

    @cached_property
    def dg(self):
        """dg[i, j, k] = d_i g_jk."""
        return self.grid.gradient(self.g)

    @cached_property
    def christoffel(self):
        dg = self.dg
        # lowered: Gamma_{l,ij} = 1/2 (d_i g_jl + d_j g_il - d_l g_ij)
        low = 0.5 * (np.einsum("ijl...->lij...", dg) + np.einsum("jil...->lij...", dg)
                     - dg)
        return np.einsum("kl...,lij...->kij...", self.g_inv, low)

    @cached_property
    def curvature(self):
        return curvature_bundle(self)

    def covariant_derivative(self, t):
        return covariant_derivative(t, self)

    def raise_index(self, t, slot=0):
        return raise_lower(t, self, slot, "up")

    def lower_index(self, t, slot=0):
        return raise_lower(t, self, slot, "down")

    def trace(self, phi):
        """trace_g of a covariant rank-2 field."""
        return np.einsum("ij...,ij...->...", self.g_inv, phi)

    def perturbed(self, phi, t):
        return MetricField(self.grid, self.g + t * np.asarray(phi))

    def norm(self, t, rank=None):
        return l2_norm(t, self, rank)


def curvature_bundle(metric: MetricField) -> CurvatureBundle:
    grid = metric.grid
    gam = metric.christoffel
    dgam = grid.gradient(gam)  # dgam[i, l, j, k] = d_i Gamma^l_jk
    quad = np.einsum("lim...,mjk...->lijk...", gam, gam)
    riem = (np.einsum("iljk...->lijk...", dgam) - np.einsum("jlik...->lijk...", dgam)
            + quad - np.einsum("lijk...->ljik...", quad))
    ricci = _sym(np.einsum("iijk...->jk...", riem))
    scalar = metric.trace(ricci)
    einstein = ricci - 0.5 * scalar * metric.g
    return CurvatureBundle(gam, riem, ricci, scalar, einstein)


def covariant_derivative(t, metric: MetricField):
    """Levi-Civita derivative of a covariant tensor; new slot first."""
    grid = metric.grid
    t = grid.check(t)
    rank = t.ndim - grid.dim
    out = grid.gradient(t)
    gam = metric.christoffel
    letters = "abcdefgh"[:rank]
    for s in range(rank):
        src = letters[:s] + "m" + letters[s + 1:]
        out = out - _pointwise(f"mi{letters[s]},{src}->i{letters}", gam, t, grid)
    return out


def _pointwise(spec, a, b, grid):
    """einsum over component axes with the grid flattened to one trailing axis."""
    ins, out = spec.split("->")
    sa, sb = ins.split(",")
    fa = np.ascontiguousarray(a).reshape(a.shape[: a.ndim - grid.dim] + (-1,))
    fb = np.ascontiguousarray(b).reshape(b.shape[: b.ndim - grid.dim] + (-1,))
    res = np.einsum(f"{sa}z,{sb}z->{out}z", fa, fb)
    return res.reshape(res.shape[:-1] + grid.shape)


def raise_lower(t, metric: MetricField, slot, direction):
    grid = metric.grid
    t = grid.check(t)
    rank = t.ndim - grid.dim
    if not 0 <= slot < rank:
        raise ValueError(f"slot {slot} out of range for rank {rank}")
    if direction == "up":
        m = metric.g_inv
    elif direction == "down":
        m = metric.g
    else:
        raise ValueError(f"direction must be 'up' or 'down', got {direction!r}")
    letters = "abcdefgh"[:rank]
    src = letters[:slot] + "y" + letters[slot + 1:]
    return _pointwise(f"{letters[slot]}y,{src}->{letters}", m, t, grid)


def exterior_derivative_function(f, metric):
    return metric.grid.gradient(f)


def hessian(f, metric: MetricField):
    return covariant_derivative(metric.grid.gradient(f), metric)


def raise_all(t, metric: MetricField):
    rank = t.ndim - metric.grid.dim
    for s in range(rank):
        t = raise_lower(t, metric, s, "up")
    return t


def lower_all(t, metric: MetricField):
    rank = t.ndim - metric.grid.dim
    for s in range(rank):
        t = raise_lower(t, metric, s, "down")
    return t


def divergence(phi, metric: MetricField):
    """delta phi = -g^{ia} (nabla phi)_{i a ...}, evaluated in conservative form.

    With all indices raised, nabla_i T^{i b..} = (1/sqrt g) d_i(sqrt g T^{i b..})
    + sum over the remaining slots of Gamma^{b}_{i m} T^{i .. m ..}. On the grid
    this form is the exact transpose of the discrete covariant derivative in the
    L2 inner product, which the least-squares solvers rely on.
    """
    grid = metric.grid
    phi = grid.check(phi)
    rank = phi.ndim - grid.dim
    if rank < 1:
        raise ValueError("divergence needs a tensor of rank >= 1")
    up = raise_all(phi, metric)
    vol = metric.sqrt_det
    out = sum(grid.diff(vol * up[i], i) for i in range(metric.dim)) / vol
    gam = metric.christoffel
    letters = "abcdefgh"[: rank - 1]
    for s in range(rank - 1):
        src = letters[:s] + "m" + letters[s + 1:]
        out = out + _pointwise(f"{letters[s]}im,i{src}->{letters}", gam, up, grid)
    return -lower_all(out, metric)


def bianchi_residual(metric: MetricField, relative=False):
    """L2 norm of delta Ric + 1/2 ds; optionally divided by max(||Ric||, floor)."""
    cb = metric.curvature
    res = divergence(cb.ricci, metric) + 0.5 * metric.grid.gradient(cb.scalar)
    value = l2_norm(res, metric)
    if relative:
        return value / max(l2_norm(cb.ricci, metric), 1e-12)
    return value


def sectional_curvature(metric: MetricField, i, j):
    if i == j:
        raise ValueError("sectional curvature needs two distinct axes")
    n = metric.dim
    if not (0 <= i < n and 0 <= j < n):
        raise ValueError("axis out of range")
    riem = metric.curvature.riemann
    g = metric.g
    # g(R(d_i, d_j) d_j, d_i)
    num = np.einsum("l...,l...->...", g[i], riem[:, i, j, j])
    area = g[i, i] * g[j, j] - g[i, j] ** 2
    return num / area


@dataclass(frozen=True)
class CrossCurvature:
    tensor: np.ndarray
    identity_residual: float
    identity_relative: float
    min_abs_det: float


def _e_scale(metric, ein):
    return max(float(np.sqrt(metric.grid.integrate(np.einsum("ij...,ij...->...", ein, ein)) /
                             metric.grid.volume)), 1e-300)


def cross_curvature(metric: MetricField, det_tol=1e-10, einstein=None):
    """Cross-curvature tensor Cr = (det E / det g) g E^{-1} g in dimension 3.

    Also evaluates the residual of
    (Cr^-1)^{ij} nabla_i Cr_jk - 1/2 (Cr^-1)^{ij} nabla_k Cr_ij.
    ``einstein`` substitutes another symmetric field for E; the identity only
    uses that E is divergence free.
    """
    if metric.dim != 3:
        raise GeometryError(f"cross curvature is defined in dimension 3, got {metric.dim}")
    grid = metric.grid
    ein = metric.curvature.einstein if einstein is None else np.asarray(einstein, dtype=float)
    emats = pointwise_matrices(ein, grid)
    dets = np.linalg.det(emats)
    scale = _e_scale(metric, ein)
    bad = np.abs(dets) <= det_tol * scale**3
    if bad.any():
        flat = int(np.argmin(np.abs(dets)))
        node = tuple(int(v) for v in np.unravel_index(flat, grid.shape))
        raise GeometryError(f"Einstein tensor singular at node {node} (det {dets[flat]:.3e})")
    if not (np.all(dets > 0) or np.all(dets < 0)):
        # a continuous det E that changes sign vanishes between nodes
        flat = int(np.argmin(np.abs(dets)))
        node = tuple(int(v) for v in np.unravel_index(flat, grid.shape))
        raise GeometryError(f"det E changes sign, so E is singular near node {node} (det {dets[flat]:.3e})")
    gm = pointwise_matrices(metric.g, grid)
    factor = dets / np.linalg.det(gm)
    crm = factor[:, None, None] * gm @ np.linalg.inv(emats) @ gm
    crm = 0.5 * (crm + np.swapaxes(crm, 1, 2))
    cr = from_matrices(crm, grid)
    cr_inv = from_matrices(np.linalg.inv(crm), grid)
    nab = covariant_derivative(cr, metric)  # nab[i, j, k] = nabla_i Cr_jk
    lhs = np.einsum("ij...,ijk...->k...", cr_inv, nab)
    rhs = 0.5 * np.einsum("ij...,kij...->k...", cr_inv, nab)
    res = l2_norm(lhs - rhs, metric)
    ref = l2_norm(lhs, metric) + l2_norm(rhs, metric)
    return CrossCurvature(cr, res, res / max(ref, 1e-300), float(np.abs(dets).min()))
