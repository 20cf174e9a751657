"""Matrix-free minimal-norm least squares driven by apply/adjoint pairs."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .operators import OperatorHandle

log = logging.getLogger(__name__)

ROUNDOFF = 1e-13


@dataclass
class LinearSolveSpec:
    operator: OperatorHandle
    rhs: np.ndarray
    rel_tol: float = 1e-10
    max_iter: int | None = None

    def __post_init__(self):
        if not 0 < self.rel_tol < 1:
            raise ValueError(f"rel_tol must lie in (0, 1), got {self.rel_tol}")
        if self.max_iter is None:
            self.max_iter = 10 * int(np.prod(self.operator.domain_shape()))


@dataclass
class SolveInfo:
    converged: bool
    iterations: int
    normal_residual: float
    history: list = field(default_factory=list, repr=False)


class SolverError(RuntimeError):
    def __init__(self, message, best=None, info=None):
        super().__init__(message)
        self.best = best
        self.info = info


def least_squares_solve(spec: LinearSolveSpec, raise_on_failure=False):
    """CGLS in the L2 inner products of the operator's domain and codomain.

    Starting from zero keeps every iterate in the range of the adjoint, so
    the limit is the minimal-norm minimizer and kernel directions (Killing
    fields, for instance) get no component. Stops when
    ||A*(b - A x)|| <= max(rel_tol * ||A* b||, floor) where the floor,
    ROUNDOFF * k_max * ||b|| with k_max the largest grid wavenumber, is the
    size of A* b that round-off alone produces for a first-order operator.
    Without it a right-hand side that is orthogonal to the range up to
    round-off would never meet the relative test.

    Returns ``(x, info)``; on non-convergence returns the best iterate with
    ``info.converged = False`` unless ``raise_on_failure`` is set.
    """
    op = spec.operator
    b = np.asarray(spec.rhs, dtype=float)
    x = np.zeros(op.domain_shape())
    r = b.copy()
    s = op.adjoint(r)
    gamma = op.inner_domain(s, s)
    gamma0 = gamma
    history = [np.sqrt(max(gamma, 0.0))]
    kmax = max(op.metric.grid.resolution) // 2
    floor = ROUNDOFF * kmax * np.sqrt(max(op.inner_codomain(b, b), 0.0))
    if np.sqrt(max(gamma0, 0.0)) <= floor:
        return x, SolveInfo(True, 0, 0.0, history)
    target = max(spec.rel_tol**2 * gamma0, floor**2)
    p = s.copy()
    it = 0
    while it < spec.max_iter:
        it += 1
        q = op.apply(p)
        qq = op.inner_codomain(q, q)
        if qq <= 0:
            break
        alpha = gamma / qq
        x += alpha * p
        r -= alpha * q
        s = op.adjoint(r)
        gamma_new = op.inner_domain(s, s)
        history.append(np.sqrt(max(gamma_new, 0.0)))
        if gamma_new <= target:
            gamma = gamma_new
            break
        p = s + (gamma_new / gamma) * p
        gamma = gamma_new
    rel = float(np.sqrt(max(gamma, 0.0) / gamma0))
    info = SolveInfo(gamma <= target, it, rel, history)
    if not info.converged:
        log.warning("%s least squares did not converge: %d iterations, residual %.3e",
                    op.name, it, rel)
        if raise_on_failure:
            raise SolverError(f"{op.name} solve did not converge", x, info)
    return x, info


def assemble_dense(fn, in_shape):
    """Matrix of a linear field map by applying it to every unit vector."""
    size = int(np.prod(in_shape))
    cols = []
    for j in range(size):
        e = np.zeros(size)
        e[j] = 1.0
        cols.append(np.asarray(fn(e.reshape(in_shape))).ravel())
    return np.array(cols).T


def dense_normal_solve(spec: LinearSolveSpec, null_tol=1e-9):
    """Independent oracle: explicitly assembled normal equations, solved densely.

    Builds N = [A* A] column by column, solves N x = A* b with a
    pseudo-inverse, then removes any component along the numerical kernel of
    A orthogonally in the L2 inner product of the domain, so the answer is
    comparable with the minimal-norm iterative solution.
    """
    op = spec.operator
    shape = op.domain_shape()
    a_mat = assemble_dense(op.apply, shape)
    normal = assemble_dense(lambda v: op.adjoint(op.apply(v)), shape)
    rhs = op.adjoint(np.asarray(spec.rhs, dtype=float)).ravel()
    x = np.linalg.lstsq(normal, rhs, rcond=None)[0]
    u, sv, vt = np.linalg.svd(a_mat, full_matrices=False)
    kernel = vt[sv <= null_tol * sv.max()]
    if kernel.size:
        basis = [k.reshape(shape) for k in kernel]
        gram = np.array([[op.inner_domain(p, q) for q in basis] for p in basis])
        proj = np.array([op.inner_domain(p, x.reshape(shape)) for p in basis])
        coef = np.linalg.solve(gram, proj)
        x = x - sum(c * k for c, k in zip(coef, kernel))
    return x.reshape(shape), kernel.shape[0]
