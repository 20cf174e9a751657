"""Harmonic tensors, infinitesimal harmonic transformations and the pointwise
classification of K = nabla(phi_bar) for harmonic phi.

For harmonic phi the tensor phi_bar = phi - 1/2 (trace phi) g is divergence
free, so K_ijk = nabla_i phi_bar_jk lies in

    W = {K : K_ijk = K_ikj, sum_i K_iik = 0},

which splits orthogonally as K1 (cyclic sum zero, trace-free), K2 (totally
symmetric, trace-free) and K3 (determined by its trace a_i = sum_j K_ijj):

    K_ijk = ((n+1) a_i delta_jk - a_j delta_ik - a_k delta_ij) / (n^2 + n - 2).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import null_space, orth

from .geometry import MetricField, covariant_derivative, divergence, hessian
from .grid_field import l2_norm
from .operators import alpha_g_adjoint, d_sym2, killing_operator, sampson_1form, sym3_derivative
from .report import CheckReport

FLOOR = 1e-12
LABEL_REL = 1e-6


def harmonic_tensor_residual(phi, g: MetricField):
    """||alpha_g^* phi|| = ||delta phi + 1/2 d trace phi||."""
    return l2_norm(alpha_g_adjoint(phi, g), g)


def harmonic_tensor_relative(phi, g: MetricField):
    scale = l2_norm(g.grid.gradient(phi), g)
    return harmonic_tensor_residual(phi, g) / max(scale, FLOOR)


def iht_residual(theta, g: MetricField):
    """(||Delta_S theta||, ||delta* theta||): the second is zero for Killing forms."""
    return l2_norm(sampson_1form(theta, g), g), l2_norm(killing_operator(theta, g), g)


def bar(phi, g: MetricField):
    """phi_bar = phi - 1/2 (trace_g phi) g."""
    return phi - 0.5 * g.trace(phi) * g.g


def unbar(phi_bar, g: MetricField):
    """phi = phi_bar - 1/(n-2) (trace_g phi_bar) g, the inverse of ``bar`` for n != 2."""
    n = g.dim
    if n == 2:
        raise ValueError("bar is not invertible in dimension 2 (it removes the trace)")
    return phi_bar - g.trace(phi_bar) / (n - 2) * g.g


# ---------------------------------------------------------------------------
# the space W and its three summands, in orthonormal-frame components

def _unit(n, *idx):
    e = np.zeros((n,) * len(idx))
    e[idx] = 1.0
    return e.ravel()


def _constraints_w(n):
    rows = []
    for i, j, k in itertools.product(range(n), repeat=3):
        if j < k:
            rows.append(_unit(n, i, j, k) - _unit(n, i, k, j))
    for k in range(n):
        rows.append(sum(_unit(n, i, i, k) for i in range(n)))
    return np.array(rows)


def _trace23(n):
    return np.array([sum(_unit(n, i, j, j) for j in range(n)) for i in range(n)])


def _cyclic(n):
    rows = []
    for i, j, k in itertools.product(range(n), repeat=3):
        rows.append(_unit(n, i, j, k) + _unit(n, j, k, i) + _unit(n, k, i, j))
    return np.array(rows)


def _antisym12(n):
    return np.array([_unit(n, i, j, k) - _unit(n, j, i, k)
                     for i, j, k in itertools.product(range(n), repeat=3) if i < j])


def k3_ansatz(a):
    """The K3 element with trace a (a has shape (n,) + anything)."""
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    eye = np.eye(n).reshape((n, n) + (1,) * (a.ndim - 1))
    return ((n + 1) * np.einsum("i...,jk...->ijk...", a, eye) - np.einsum("j...,ik...->ijk...", a, eye)
            - np.einsum("k...,ij...->ijk...", a, eye)) / (n * n + n - 2)


@dataclass(frozen=True)
class KSpaceBasis:
    n: int
    W: np.ndarray
    K1: np.ndarray
    K2: np.ndarray
    K3: np.ndarray

    @property
    def dims(self):
        return tuple(b.shape[1] for b in (self.W, self.K1, self.K2, self.K3))

    def subspaces(self):
        return {"K1": self.K1, "K2": self.K2, "K3": self.K3}


@lru_cache(maxsize=None)
def build_k_basis(n: int) -> KSpaceBasis:
    """Orthonormal bases (columns, vectors in R^{n^3}) for W, K1, K2, K3."""
    if n not in (2, 3):
        raise ValueError(f"dimension must be 2 or 3, got {n}")
    cw = _constraints_w(n)
    tr = _trace23(n)
    W = null_space(cw)
    K1 = null_space(np.vstack([cw, tr, _cyclic(n)]))
    K2 = null_space(np.vstack([cw, tr, _antisym12(n)]))
    K3 = orth(np.array([k3_ansatz(np.eye(n)[a]).ravel() for a in range(n)]).T)
    # guards against construction errors
    if np.abs(cw @ K3).max() > 1e-12:
        raise RuntimeError("K3 ansatz does not lie in W")
    dims = [b.shape[1] for b in (K1, K2, K3)]
    if sum(dims) != W.shape[1]:
        raise RuntimeError(f"subspace dimensions {dims} do not sum to dim W = {W.shape[1]}")
    allb = np.hstack([K1, K2, K3])
    if np.abs(allb.T @ allb - np.eye(allb.shape[1])).max() > 1e-12:
        raise RuntimeError("subspaces are not mutually orthogonal")
    return KSpaceBasis(n, W, K1, K2, K3)


def to_frame(K, g: MetricField):
    """Components of a covariant 3-tensor in the per-node orthonormal frame, shape (P, n^3)."""
    n = g.dim
    E = g.frame  # (P, n, n), columns are frame vectors
    Kp = np.moveaxis(K.reshape(n, n, n, -1), -1, 0)
    return np.einsum("pijk,pia,pjb,pkc->pabc", Kp, E, E, E).reshape(Kp.shape[0], -1)


def _field_norm(values, g):
    """L2 norm of per-node frame vectors (P, m)."""
    pw = np.sum(values * values, axis=1).reshape(g.grid.shape)
    return float(np.sqrt(max(g.grid.integrate(pw, g.sqrt_det), 0.0)))


@dataclass
class ClassReport:
    component_norms: dict
    total_norm: float
    outside_w: float
    labels: tuple
    constraint_residuals: dict
    structure_residuals: dict
    pythagoras: float
    negligible: bool = False
    notes: list = field(default_factory=list)


def classify(phi, g: MetricField, tol=1e-6, label_rel=LABEL_REL):
    """Project K = nabla(phi_bar) onto K1, K2, K3 node by node."""
    n = g.dim
    rel = harmonic_tensor_relative(phi, g)
    if rel > tol:
        raise ValueError(f"input is not a harmonic tensor (relative residual {rel:.3e})")
    pb = bar(phi, g)
    nab = covariant_derivative(pb, g)
    K = to_frame(nab, g)
    basis = build_k_basis(n)
    total = _field_norm(K, g)
    norms, projections = {}, {}
    for name, B in basis.subspaces().items():
        proj = (K @ B) @ B.T
        projections[name] = proj
        norms[name] = _field_norm(proj, g)
    inside = K @ basis.W @ basis.W.T
    outside = _field_norm(K - inside, g)
    # Pythagoras is the identity for the part of K inside W; the discretisation
    # leaves a small remainder outside W, reported as outside_w.
    inside_norm = _field_norm(inside, g)
    sumsq = sum(v * v for v in norms.values())
    pyth = abs(inside_norm**2 - sumsq) / max(inside_norm**2, FLOOR**2)
    # K is zero (phi_bar parallel) when it is negligible against phi_bar itself;
    # the test is scale invariant, unlike an absolute floor.
    ref = l2_norm(pb, g)
    negligible = total <= label_rel * max(ref, FLOOR)
    labels = () if negligible else tuple(k for k, v in norms.items() if v > label_rel * total)
    notes = ["nabla phi_bar negligible: phi_bar is parallel"] if negligible else []

    scale = max(total, label_rel * ref, FLOOR)
    cons = {}
    p1 = projections["K1"].reshape(-1, n, n, n)
    cons["K1_cyclic"] = _field_norm((p1 + np.einsum("pjki->pijk", p1) + np.einsum("pkij->pijk", p1))
                                    .reshape(len(p1), -1), g) / scale
    p2 = projections["K2"].reshape(-1, n, n, n)
    cons["K2_antisym"] = _field_norm((p2 - np.swapaxes(p2, 1, 2)).reshape(len(p2), -1), g) / scale
    p3 = projections["K3"].reshape(-1, n, n, n)
    a = np.einsum("pijj->ip", p3)
    cons["K3_ansatz"] = _field_norm((p3 - np.moveaxis(k3_ansatz(a), -1, 0)).reshape(len(p3), -1), g) / scale

    ref = max(l2_norm(nab, g), FLOOR)
    structure = {
        "killing": l2_norm(sym3_derivative(pb, g), g) / ref,
        "codazzi": l2_norm(d_sym2(pb, g), g) / ref,
        "sinyukov": sinyukov_residual(omega_from_bar(pb, g), g) / ref,
    }
    return ClassReport(norms, total, outside / scale, labels, cons, structure, pyth, negligible, notes)


def omega_from_bar(phi_bar, g: MetricField):
    """omega = phi_bar - n/(n^2 + n - 2) (trace phi_bar) g."""
    n = g.dim
    return phi_bar - n / (n * n + n - 2) * g.trace(phi_bar) * g.g


def sinyukov_defect(omega, g: MetricField):
    """D_kij = 2 nabla_k omega_ij - d_i(tr omega) g_kj - d_j(tr omega) g_ik."""
    dtr = g.grid.gradient(g.trace(omega))
    nab = covariant_derivative(omega, g)
    return 2 * nab - np.einsum("i...,kj...->kij...", dtr, g.g) - np.einsum("j...,ik...->kij...", dtr, g.g)


def sinyukov_residual(omega, g: MetricField):
    return l2_norm(sinyukov_defect(omega, g), g)


# ---------------------------------------------------------------------------
# closed forms on the flat torus

@dataclass(frozen=True)
class FlatKillingData:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        A, B, C = (np.asarray(x, dtype=float) for x in (self.A, self.B, self.C))
        n = C.shape[0]
        if A.shape != (n,) * 4 or B.shape != (n,) * 3 or C.shape != (n, n):
            raise ValueError("A, B, C must have shapes (n,n,n,n), (n,n,n), (n,n)")
        checks = {
            "A_ijkl = A_jikl": A - np.einsum("jikl->ijkl", A),
            "A_ijkl = A_ijlk": A - np.einsum("ijlk->ijkl", A),
            "A_ijkl + A_ikjl = 0": A + np.einsum("ikjl->ijkl", A),
            "B_ijk = B_jik": B - np.einsum("jik->ijk", B),
            "B_ijk + B_ikj = 0": B + np.einsum("ikj->ijk", B),
            "C symmetric": C - C.T,
            "A trace-free": np.einsum("iikl->kl", A),
            "B trace-free": np.einsum("iik->k", B),
        }
        for name, defect in checks.items():
            if np.abs(defect).max() > 1e-12:
                raise ValueError(f"closed-form data violates {name}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)


def _require_flat(g: MetricField):
    n = g.dim
    if np.abs(g.g - np.eye(n).reshape((n, n) + (1,) * n)).max() > 1e-14:
        raise ValueError("closed forms are implemented for the flat metric only")


def flat_killing_closed_form(data: FlatKillingData, g: MetricField):
    """(phi_bar, phi, killing residual) for phi_bar = A x x + B x + C on the flat torus.

    Only A = B = 0 is periodic, so phi_bar is the constant C; phi is recovered
    with the inversion phi = phi_bar - 1/(n-2) (trace phi_bar) g.
    """
    _require_flat(g)
    if np.abs(data.A).max() > 0 or np.abs(data.B).max() > 0:
        raise ValueError("non-periodic closed form: A and B must vanish on the torus")
    n = g.dim
    pb = np.broadcast_to(data.C.reshape((n, n) + (1,) * n), g.g.shape).copy()
    phi = unbar(pb, g)
    return pb, phi, l2_norm(sym3_derivative(pb, g), g)


@dataclass(frozen=True)
class CodazziPotential:
    tensor: np.ndarray
    codazzi_residual: float
    trace_spread: float
    constant_trace: bool


def flat_codazzi_from_potential(F, g: MetricField):
    """Hessian of F on the flat torus. It is Codazzi; a constant trace would need
    Laplace(F) constant, which on the torus forces F constant."""
    _require_flat(g)
    hess = hessian(F, g)
    res = l2_norm(d_sym2(hess, g), g) / max(l2_norm(hess, g), 1.0)
    tr = g.trace(hess)
    spread = float(np.abs(tr - tr.mean()).max())
    return CodazziPotential(hess, res, spread, spread <= 1e-10 * max(1.0, float(np.abs(hess).max())))


def conservative_check(phi, g: MetricField, tol=1e-6, method="cgls"):
    """alpha split of a divergence-free phi.

    Then Delta_S theta = d(trace phi_h) and trace phi = ((n-2)/2) delta theta + trace phi_h,
    so when trace phi_h is constant C: trace phi - ((n-2)/2) delta theta = C and
    the integral of trace phi is C Vol. The printed "+" variant is reported too.
    """
    from .decompositions import alpha_split

    n = g.dim
    rep = CheckReport("conservative")
    scale = max(l2_norm(g.grid.gradient(phi), g), FLOOR)
    rel = l2_norm(divergence(phi, g), g) / scale
    if rel > tol:
        raise ValueError(f"input is not conservative (relative divergence {rel:.3e})")
    sp = alpha_split(phi, g, method)
    tr_h = g.trace(sp.residual_part)
    defect = sampson_1form(sp.theta, g) - g.grid.gradient(tr_h)
    rep.add("sampson_vs_dtrace", l2_norm(defect, g) / scale, tol)
    mean_h = g.grid.integrate(tr_h, g.sqrt_det) / g.volume
    if np.abs(tr_h - mean_h).max() <= tol * max(1.0, abs(mean_h)):
        div_theta = divergence(sp.theta, g)
        tr = g.trace(phi)
        minus = tr - 0.5 * (n - 2) * div_theta
        plus = tr + 0.5 * (n - 2) * div_theta
        ref = max(1.0, float(np.abs(tr).max()))
        rep.add("constancy", float(np.abs(minus - minus.mean()).max()) / ref, tol)
        rep.note("constancy_as_printed", float(np.abs(plus - plus.mean()).max()) / ref)
        c = float(minus.mean())
        rep.note("C", c)
        total = g.grid.integrate(tr, g.sqrt_det)
        rep.add("integral_vs_C_vol", abs(total - c * g.volume) / max(abs(total), 1.0), tol)
    else:
        rep.skip("constancy", "trace of the harmonic part is not constant")
    return rep
