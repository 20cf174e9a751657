"""Linear differential operators on 1-forms and symmetric tensors.

Sign conventions: ``delta = -trace o nabla`` on every rank (differentiation
slot contracted with the first tensor slot), the Killing operator
``delta* theta = Sym(nabla theta)``, and the rough Laplacian ``div o grad``
(so it acts on sin(x) as multiplication by -1 on the flat torus).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .geometry import MetricField, covariant_derivative, divergence, hessian
from .grid_field import l2_inner_product, l2_norm

__all__ = [
    "OperatorHandle", "divergence", "killing_operator", "sym3_derivative", "d_sym2",
    "d_function", "d_form", "rough_laplacian", "sampson_1form", "lichnerowicz_sym2",
    "sampson_sym2", "bourguignon_sym2", "alpha_g", "alpha_g_adjoint",
    "conformal_killing", "conformal_killing_adjoint", "conformal_killing_residual",
    "killing_handle", "alpha_handle", "york_handle", "adjointness_gap",
]


def _sym2(a):
    return 0.5 * (a + np.swapaxes(a, 0, 1))


def _check_symmetric(phi, what="input"):
    asym = np.abs(phi - np.swapaxes(phi, 0, 1)).max()
    if asym > 1e-10 * max(1.0, np.abs(phi).max()):
        raise ValueError(f"{what} must be a symmetric 2-tensor (asymmetry {asym:.3e})")


def d_function(f, g: MetricField):
    """Exterior derivative of a scalar field."""
    return g.grid.gradient(f)


def d_form(alpha, g: MetricField):
    """(nabla alpha)(X, Y) = (nabla_X alpha)(Y): the 'd' that pairs with delta on S^2M."""
    return covariant_derivative(alpha, g)


def killing_operator(theta, g: MetricField):
    """(delta* theta)_ij = 1/2 (nabla_i theta_j + nabla_j theta_i)."""
    return _sym2(covariant_derivative(theta, g))


def sym3_derivative(omega, g: MetricField):
    """Cyclic sum (nabla_X w)(Y,Z) + (nabla_Y w)(Z,X) + (nabla_Z w)(X,Y)."""
    _check_symmetric(omega)
    nab = covariant_derivative(omega, g)  # nab[x, y, z]
    return (nab + np.einsum("yzx...->xyz...", nab) + np.einsum("zxy...->xyz...", nab))


def d_sym2(omega, g: MetricField):
    """(d w)(X,Y,Z) = (nabla_X w)(Y,Z) - (nabla_Y w)(X,Z)."""
    _check_symmetric(omega)
    nab = covariant_derivative(omega, g)
    return nab - np.swapaxes(nab, 0, 1)


def rough_laplacian(t, g: MetricField):
    """div o grad = g^{ij} nabla_i nabla_j on covariant tensors."""
    nn = covariant_derivative(covariant_derivative(t, g), g)
    return np.einsum("ij...,ij...->...", g.g_inv, nn)


def sampson_1form(theta, g: MetricField):
    """Delta_S theta = 2 delta delta* theta - d delta theta."""
    return 2.0 * divergence(killing_operator(theta, g), g) - d_function(divergence(theta, g), g)


def curvature_action(phi, g: MetricField):
    """(R o phi)_jk = R^l_{ijk} g^{ia} phi_{la}; equals Ric when phi = g."""
    riem = g.curvature.riemann
    mixed = np.einsum("ia...,la...->li...", g.g_inv, phi)
    return _sym2(np.einsum("lijk...,li...->jk...", riem, mixed))


def lichnerowicz_sym2(phi, g: MetricField):
    """Delta phi + 2 R o phi - Ric o phi - phi o Ric  (rough Laplacian Delta)."""
    _check_symmetric(phi)
    ric = g.curvature.ricci
    ric_mixed = np.einsum("kl...,il...->ik...", g.g_inv, ric)  # Ric_i^k
    ric_phi = np.einsum("ik...,jk...->ij...", ric_mixed, phi)
    out = rough_laplacian(phi, g) + 2.0 * curvature_action(phi, g) - ric_phi - np.swapaxes(ric_phi, 0, 1)
    return _sym2(out)


def sampson_sym2(phi, g: MetricField):
    """delta* delta phi + delta(sym3 phi) on symmetric 2-tensors.

    Here delta* is the Killing operator and the inner delta is the divergence
    of the totally symmetric 3-tensor, so that
    <Delta_S phi, phi> = ||delta phi||^2 + 1/3 ||sym3 phi||^2.
    """
    _check_symmetric(phi)
    out = killing_operator(divergence(phi, g), g) + divergence(sym3_derivative(phi, g), g)
    return _sym2(out)


def bourguignon_sym2(omega, g: MetricField):
    """Delta_B = d delta + delta d with d the S^2M exterior derivative."""
    _check_symmetric(omega)
    out = d_form(divergence(omega, g), g) + divergence(d_sym2(omega, g), g)
    return _sym2(out)


def alpha_g(theta, g: MetricField):
    """alpha_g(theta) = delta* theta + 1/2 (delta theta) g."""
    return killing_operator(theta, g) + 0.5 * divergence(theta, g) * g.g


def alpha_g_adjoint(phi, g: MetricField):
    """alpha_g^* phi = delta phi + 1/2 d(trace_g phi)."""
    return divergence(phi, g) + 0.5 * d_function(g.trace(phi), g)


def conformal_killing(theta, g: MetricField):
    """delta* theta + (1/n)(delta theta) g: the trace-free part of delta* theta."""
    return killing_operator(theta, g) + divergence(theta, g) * g.g / g.dim


def conformal_killing_adjoint(phi, g: MetricField):
    return divergence(phi, g) + d_function(g.trace(phi), g) / g.dim


def conformal_killing_residual(theta, g: MetricField):
    return l2_norm(conformal_killing(theta, g), g)


@dataclass(frozen=True)
class OperatorHandle:
    """A linear map between field spaces together with its L2 adjoint."""

    name: str
    apply: Callable
    adjoint: Callable
    domain_rank: int
    codomain_rank: int
    metric: MetricField

    def domain_shape(self):
        return (self.metric.dim,) * self.domain_rank + self.metric.grid.shape

    def codomain_shape(self):
        return (self.metric.dim,) * self.codomain_rank + self.metric.grid.shape

    def inner_domain(self, a, b):
        return l2_inner_product(a, b, self.metric, self.domain_rank)

    def inner_codomain(self, a, b):
        return l2_inner_product(a, b, self.metric, self.codomain_rank)


def killing_handle(g):
    return OperatorHandle("killing", lambda t: killing_operator(t, g), lambda p: divergence(p, g), 1, 2, g)


def alpha_handle(g):
    return OperatorHandle("alpha", lambda t: alpha_g(t, g), lambda p: alpha_g_adjoint(p, g), 1, 2, g)


def york_handle(g):
    return OperatorHandle("conformal-killing", lambda t: conformal_killing(t, g),
                          lambda p: conformal_killing_adjoint(p, g), 1, 2, g)


def adjointness_gap(handle: OperatorHandle, x, y):
    """|<A x, y> - <x, A* y>| divided by ||A x|| ||y|| + ||x|| ||A* y||."""
    ax = handle.apply(x)
    aty = handle.adjoint(y)
    lhs = handle.inner_codomain(ax, y)
    rhs = handle.inner_domain(x, aty)
    g = handle.metric
    scale = (l2_norm(ax, g) * l2_norm(y, g) + l2_norm(x, g) * l2_norm(aty, g))
    return abs(lhs - rhs) / max(scale, 1e-300)


# re-exported for convenience
divergence = divergence
hessian = hessian
