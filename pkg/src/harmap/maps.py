"""Maps between flat tori: pullback, energy, second fundamental form, tension.

A map is ``f^a(x) = sum_b W^a_b x^b + u^a(x)`` with an integer winding matrix
``W`` and periodic displacements ``u`` sampled on the domain grid. Codomain
metrics are either expression-backed (evaluated exactly at mapped points) or
grid-backed (trigonometric interpolation, with a fast path when the map is
the identity on the grid).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .expression import Num, as_expression, check_periodic, evaluate, VARIABLES
from .geometry import MetricField, divergence, pointwise_matrices
from .grid_field import TAIL_WARN, l2_norm, spectral_diagnostics

RANK_TOL = 1e-6


class CodomainMetric:
    """Metric on the target torus, evaluable at arbitrary points ``(m, ...)``."""

    dim: int

    def values(self, points):
        raise NotImplementedError

    def christoffel(self, points):
        raise NotImplementedError


class ExpressionMetric(CodomainMetric):
    """Codomain metric whose components are closed-form expressions."""

    def __init__(self, components):
        comps = [[as_expression(c) for c in row] for row in components]
        m = len(comps)
        if m not in (2, 3) or any(len(row) != m for row in comps):
            raise ValueError("codomain metric needs a square 2x2 or 3x3 component matrix")
        for i in range(m):
            for j in range(i):
                if str(comps[i][j]) != str(comps[j][i]):
                    raise ValueError(f"component ({i + 1},{j + 1}) differs from ({j + 1},{i + 1})")
        for row in comps:
            for c in row:
                check_periodic(c, m)
        self.dim = m
        self.components = comps
        # d_c gbar_ab, symbolically
        self._dcomps = [[[c.diff(VARIABLES[k]) for k in range(m)] for c in row] for row in comps]

    @classmethod
    def flat(cls, m):
        return cls([[Num(1.0 if i == j else 0.0) for j in range(m)] for i in range(m)])

    @classmethod
    def from_upper(cls, m, upper):
        """Build from a mapping ``{"11": expr, "12": expr, ...}`` (upper triangle)."""
        comps = [[None] * m for _ in range(m)]
        for i in range(m):
            for j in range(i, m):
                key = f"{i + 1}{j + 1}"
                if key not in upper:
                    raise ValueError(f"missing metric component {key}")
                comps[i][j] = comps[j][i] = as_expression(upper[key])
        extra = set(upper) - {f"{i + 1}{j + 1}" for i in range(m) for j in range(i, m)}
        if extra:
            raise ValueError(f"only upper-triangle components are accepted, got {sorted(extra)}")
        return cls(comps)

    def values(self, points):
        points = np.asarray(points, dtype=float)
        m = self.dim
        return np.array([[evaluate(self.components[a][b], points) for b in range(m)] for a in range(m)])

    def derivatives(self, points):
        """out[c, a, b] = d_c gbar_ab."""
        m = self.dim
        return np.array([[[evaluate(self._dcomps[a][b][c], points) for b in range(m)]
                          for a in range(m)] for c in range(m)])

    def christoffel(self, points):
        gv = self.values(points)
        dg = self.derivatives(points)
        m = self.dim
        mats = np.moveaxis(gv.reshape(m, m, -1), -1, 0)
        inv = np.moveaxis(np.linalg.inv(mats), 0, -1).reshape(gv.shape)
        low = 0.5 * (np.einsum("ijl...->lij...", dg) + np.einsum("jil...->lij...", dg) - dg)
        return np.einsum("kl...,lij...->kij...", inv, low)


class GridMetric(CodomainMetric):
    """Codomain metric sampled on a grid of the target torus."""

    def __init__(self, metric: MetricField, interpolate=True):
        self.metric = metric
        self.dim = metric.dim
        self.interpolate = interpolate

    def _on_nodes(self, points):
        coords = self.metric.grid.coords
        return points.shape == coords.shape and np.array_equal(points, coords)

    def _sample(self, field_values, points):
        points = np.asarray(points, dtype=float)
        if self._on_nodes(points):
            return field_values
        if not self.interpolate:
            raise ValueError("grid-backed codomain metric evaluated off its nodes; "
                             "enable interpolation or use an expression-backed metric")
        tail = spectral_diagnostics(field_values, self.metric.grid).tail_fraction
        if tail > TAIL_WARN:
            raise ValueError(f"codomain metric not resolved for interpolation (tail {tail:.2e})")
        return self.metric.grid.interpolate(field_values, points)

    def values(self, points):
        return self._sample(self.metric.g, points)

    def christoffel(self, points):
        return self._sample(self.metric.christoffel, points)


@dataclass(frozen=True)
class MapJacobian:
    J: np.ndarray
    singular_values: np.ndarray

    @property
    def min_singular(self):
        return float(self.singular_values[..., -1].min())


@dataclass
class TorusMap:
    domain: MetricField
    codomain: CodomainMetric
    winding: np.ndarray
    displacement: np.ndarray = None
    name: str = "map"

    def __post_init__(self):
        grid = self.domain.grid
        w = np.asarray(self.winding)
        m, n = self.codomain.dim, grid.dim
        if w.shape != (m, n):
            raise ValueError(f"winding matrix must be {m}x{n}, got {w.shape}")
        if not np.all(np.equal(np.mod(w, 1), 0)):
            raise ValueError("winding matrix must be integer valued")
        self.winding = w.astype(float)
        if self.displacement is None:
            self.displacement = np.zeros((m,) + grid.shape)
        u = np.asarray(self.displacement, dtype=float)
        if u.shape != (m,) + grid.shape:
            raise ValueError(f"displacement shape {u.shape}, expected {(m,) + grid.shape}")
        tail = spectral_diagnostics(u, grid).tail_fraction
        if tail > TAIL_WARN:
            raise ValueError(f"displacement not resolved on the grid (spectral tail {tail:.2e})")
        self.displacement = u

    @classmethod
    def identity(cls, domain: MetricField, codomain: CodomainMetric, name="identity"):
        n = domain.dim
        return cls(domain, codomain, np.eye(n, dtype=int), None, name)

    @property
    def grid(self):
        return self.domain.grid

    @cached_property
    def points(self):
        """f(x) at every node, shape (m,) + grid.shape (not reduced mod 2pi)."""
        return np.einsum("ab,b...->a...", self.winding, self.grid.coords) + self.displacement

    @cached_property
    def jacobian(self) -> MapJacobian:
        grid = self.grid
        du = np.stack([grid.gradient(u) for u in self.displacement])  # du[a, i]
        m, n = self.winding.shape
        J = du + self.winding.reshape((m, n) + (1,) * grid.dim)
        mats = np.moveaxis(J.reshape(m, n, -1), -1, 0)
        sv = np.linalg.svd(mats, compute_uv=False)
        return MapJacobian(J, sv.reshape(grid.shape + (min(m, n),)))

    @cached_property
    def codomain_metric(self):
        return self.codomain.values(self.points)

    @cached_property
    def codomain_christoffel(self):
        return self.codomain.christoffel(self.points)


@dataclass(frozen=True)
class EnergyResult:
    density: np.ndarray
    energy: float
    constant_map: bool


@dataclass(frozen=True)
class Theorem1Result:
    r1: float
    r2: float
    r1_rel: float
    r2_rel: float
    tension: float
    tension_rel: float
    converse_harmonic: bool
    rank_ok: bool
    notes: tuple = field(default=())


def pullback_metric(f: TorusMap):
    """g*_ij = gbar_ab(f) J^a_i J^b_j."""
    J = f.jacobian.J
    return np.einsum("ab...,ai...,bj...->ij...", f.codomain_metric, J, J)


def energy(f: TorusMap) -> EnergyResult:
    g = f.domain
    e = g.trace(pullback_metric(f))
    total = 0.5 * g.grid.integrate(e, g.sqrt_det)
    return EnergyResult(e, float(total), bool(np.abs(e).max() <= 1e-14))


def _tension_terms(f: TorusMap):
    """The three pieces of g^ij (Df_*)^a_ij: second derivatives, domain and codomain connection."""
    g = f.domain
    grid = g.grid
    J = f.jacobian.J
    hess = np.stack([np.stack([grid.gradient(grid.diff(u, i)) for i in range(grid.dim)])
                     for u in f.displacement])  # hess[a, i, j]
    dom = np.einsum("kij...,ak...->aij...", g.christoffel, J)
    cod = np.einsum("abc...,bi...,cj...->aij...", f.codomain_christoffel, J, J)
    return hess, dom, cod


def second_fundamental_form(f: TorusMap):
    """(Df_*)^a_ij = d_i d_j f^a - Gamma^k_ij d_k f^a + Gammabar^a_bc(f) d_i f^b d_j f^c."""
    hess, dom, cod = _tension_terms(f)
    sff = hess - dom + cod
    return 0.5 * (sff + np.swapaxes(sff, 1, 2))


def _codomain_norm(f, v):
    """L2 norm over the domain of a codomain-vector field, measured with gbar(f)."""
    g = f.domain
    pw = np.einsum("ab...,a...,b...->...", f.codomain_metric, v, v)
    return float(np.sqrt(max(g.grid.integrate(pw, g.sqrt_det), 0.0)))


def tension(f: TorusMap):
    """tau^a = g^ij (Df_*)^a_ij."""
    return np.einsum("ij...,aij...->a...", f.domain.g_inv, second_fundamental_form(f))


def _sff_norm(f, x):
    """L2 norm of a codomain-vector-valued 2-tensor, measured with gbar(f) and g."""
    g = f.domain
    gi = g.g_inv
    pw = np.einsum("ab...,aij...,bkl...,ik...,jl...->...", f.codomain_metric, x, x, gi, gi, optimize=True)
    return float(np.sqrt(max(g.grid.integrate(pw, g.sqrt_det), 0.0)))


def tension_residual(f: TorusMap, floor=1e-12):
    """(||tau||, ||tau|| relative to the summed norms of the untraced pieces of Df_*).

    Untraced pieces keep the scale meaningful for harmonic maps, where each
    traced piece may vanish on its own.
    """
    g_inv = f.domain.g_inv
    terms = _tension_terms(f)
    parts = [np.einsum("ij...,aij...->a...", g_inv, p) for p in terms]
    tau = parts[0] - parts[1] + parts[2]
    value = _codomain_norm(f, tau)
    scale = sum(_sff_norm(f, p) for p in terms)
    return value, value / max(scale, floor)


def theorem1_residual(f: TorusMap, tol=1e-7, floor=1e-12) -> Theorem1Result:
    """Residuals of delta g* = -1/2 de and of the identity
    delta g* + 1/2 de = -gbar(tau, f_* .), which holds for every map.

    Relative values divide by the L2 size of the coordinate derivatives of g*
    (plus ||gbar(tau, f_*)|| for r2), floored. Both sides of the identity are
    contractions of those derivatives, and the scale stays meaningful when
    delta g* and de vanish individually.
    """
    g = f.domain
    gstar = pullback_metric(f)
    dgs = divergence(gstar, g)
    e = g.trace(gstar)
    half_de = 0.5 * g.grid.gradient(e)
    tau = tension(f)
    tau_low = np.einsum("ab...,a...,bk...->k...", f.codomain_metric, tau, f.jacobian.J)
    lhs = dgs + half_de
    scale = l2_norm(g.grid.gradient(gstar), g)
    r1 = l2_norm(lhs, g)
    r2 = l2_norm(lhs + tau_low, g)
    r1_rel = r1 / max(scale, floor)
    r2_rel = r2 / max(scale + l2_norm(tau_low, g), floor)
    t_abs, t_rel = tension_residual(f, floor)

    notes = []
    m, n = f.winding.shape
    jac = f.jacobian
    jnorm = float(np.abs(jac.singular_values[..., 0]).max())
    rank_ok = n >= m and jac.min_singular >= RANK_TOL * max(jnorm, floor)
    if rank_ok and n == m:
        dets = np.linalg.det(np.moveaxis(jac.J.reshape(m, n, -1), -1, 0))
        if not (np.all(dets > 0) or np.all(dets < 0)):
            rank_ok = False
            notes.append("det J changes sign")
    converse = bool(rank_ok and r1_rel <= tol)
    if converse:
        notes.append("harmonic by Theorem 1 converse")
    return Theorem1Result(r1, r2, r1_rel, r2_rel, t_abs, t_rel, converse, bool(rank_ok), tuple(notes))


def identity_to(metric: MetricField, target_values, name="identity"):
    """id: (M, metric) -> (M, target) with the target sampled on the same grid."""
    target = MetricField(metric.grid, target_values)
    return TorusMap.identity(metric, GridMetric(target), name)


def pd_nodes_ok(values, grid):
    mats = pointwise_matrices(values, grid)
    return bool(np.all(np.linalg.eigvalsh(mats)[:, 0] > 0))
