"""L2-orthogonal splittings of symmetric 2-tensor fields.

* Berger-Ebin:  phi = delta* theta + phi_0,            delta phi_0 = 0
* York:         phi = delta* theta + lambda g + phi_TT, phi_TT trace- and divergence-free
* alpha split:  phi = alpha_g theta + phi_h,           alpha_g^* phi_h = 0

Each is a minimal-norm least-squares projection built from apply/adjoint
pairs, so Killing directions never enter theta.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .geometry import MetricField, divergence, positive_definite_check
from .grid_field import l2_inner_product, l2_norm
from .maps import GridMetric, TorusMap, energy, pullback_metric, theorem1_residual
from .operators import (alpha_g, alpha_g_adjoint, alpha_handle, conformal_killing, killing_handle,
                        killing_operator, sampson_1form, york_handle)
from .report import CheckReport
from .solver import LinearSolveSpec, SolveInfo, SolverError, dense_normal_solve, least_squares_solve

log = logging.getLogger(__name__)

FLOOR = 1e-12
DEFAULT_TOL = 1e-6


@dataclass
class DecompositionResult:
    kind: str
    theta: np.ndarray
    residual_part: np.ndarray
    parts: dict
    lam: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)
    info: SolveInfo | None = None

    def table(self):
        """Plain-dict view for reports."""
        return {"kind": self.kind, **self.diagnostics}


def _ratio(value, scale, floor=FLOOR):
    return float(value) / max(float(scale), floor)


def derivative_scale(phi, g: MetricField):
    """L2 size of the coordinate derivatives of phi: the natural scale for divergences."""
    return l2_norm(g.grid.gradient(phi), g)


def _solve(handle, rhs, method, rel_tol, max_iter):
    spec = LinearSolveSpec(handle, rhs, rel_tol=rel_tol, max_iter=max_iter)
    if method == "dense":
        x, kernel = dense_normal_solve(spec)
        return x, SolveInfo(True, 0, 0.0, [float(kernel)])
    if method != "cgls":
        raise ValueError(f"unknown solver method {method!r}")
    x, info = least_squares_solve(spec)
    if not info.converged:
        raise SolverError(f"{handle.name} solve did not converge", x, info)
    return x, info


def _check_input(phi, g):
    phi = np.asarray(phi, dtype=float)
    n = g.dim
    if phi.shape != (n, n) + g.grid.shape:
        raise ValueError(f"expected a symmetric 2-tensor of shape {(n, n) + g.grid.shape}, got {phi.shape}")
    asym = np.abs(phi - np.swapaxes(phi, 0, 1)).max()
    if asym > 1e-10 * max(1.0, np.abs(phi).max()):
        raise ValueError(f"input is not symmetric (asymmetry {asym:.3e})")
    return 0.5 * (phi + np.swapaxes(phi, 0, 1))


def _orthogonality(parts, g):
    out = {}
    names = list(parts)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            prod = l2_norm(parts[a], g) * l2_norm(parts[b], g)
            out[f"{a}.{b}"] = _ratio(abs(l2_inner_product(parts[a], parts[b], g, 2)), prod)
    return out


def _finish(kind, phi, g, theta, parts, residual, info, defining, lam=None):
    assembled = sum(parts.values())
    diag = {
        "reconstruction": _ratio(l2_norm(phi - assembled, g), l2_norm(phi, g)),
        "orthogonality": _orthogonality(parts, g),
        "defining": defining,
        "iterations": info.iterations,
        "normal_residual": info.normal_residual,
        "part_norms": {k: l2_norm(v, g) for k, v in parts.items()},
    }
    return DecompositionResult(kind, theta, residual, parts, lam, diag, info)


def berger_ebin(phi, g: MetricField, method="cgls", rel_tol=1e-10, max_iter=None):
    """phi = delta* theta + phi_0 with delta phi_0 = 0."""
    phi = _check_input(phi, g)
    theta, info = _solve(killing_handle(g), phi, method, rel_tol, max_iter)
    image = killing_operator(theta, g)
    phi0 = phi - image
    scale = derivative_scale(phi, g)
    defining = {"divergence": _ratio(l2_norm(divergence(phi0, g), g), scale)}
    return _finish("berger-ebin", phi, g, theta, {"image": image, "kernel": phi0}, phi0, info, defining)


def york(phi, g: MetricField, method="cgls", rel_tol=1e-10, max_iter=None):
    """phi = delta* theta + lambda g + phi_TT.

    lambda is eliminated pointwise (lambda = (trace phi + delta theta)/n), so the
    solve is for theta alone against the conformal-Killing operator
    L theta = delta* theta + (1/n)(delta theta) g. The parts reported for
    orthogonality are the mutually orthogonal triple L theta, (trace phi / n) g
    and phi_TT, whose sum is the same decomposition regrouped.
    """
    phi = _check_input(phi, g)
    n = g.dim
    if n == 2:
        log.warning("York's splitting is stated for n >= 3; running in dimension 2")
    theta, info = _solve(york_handle(g), phi, method, rel_tol, max_iter)
    div_theta = divergence(theta, g)
    tr = g.trace(phi)
    lam = (tr + div_theta) / n
    ks = killing_operator(theta, g)
    tt = phi - ks - lam * g.g
    parts = {"conformal_killing": conformal_killing(theta, g), "trace": (tr / n) * g.g, "tt": tt}
    defining = {
        "divergence": _ratio(l2_norm(divergence(tt, g), g), derivative_scale(phi, g)),
        "trace": _ratio(l2_norm(g.trace(tt), g), l2_norm(phi, g)),
        "trace_relation": _ratio(np.abs(tr - (-div_theta + n * lam)).max(), np.abs(tr).max()),
    }
    res = _finish("york", phi, g, theta, parts, tt, info, defining, lam)
    res.parts_as_printed = {"killing": ks, "conformal": lam * g.g, "tt": tt}
    res.diagnostics["grouped_orthogonality"] = _ratio(
        abs(l2_inner_product(ks + lam * g.g, tt, g, 2)), l2_norm(ks + lam * g.g, g) * l2_norm(tt, g))
    return res


def alpha_split(phi, g: MetricField, method="cgls", rel_tol=1e-10, max_iter=None):
    """phi = alpha_g theta + phi_h with phi_h a harmonic tensor."""
    phi = _check_input(phi, g)
    theta, info = _solve(alpha_handle(g), phi, method, rel_tol, max_iter)
    image = alpha_g(theta, g)
    phih = phi - image
    defining = {"harmonic": _ratio(l2_norm(alpha_g_adjoint(phih, g), g), derivative_scale(phi, g))}
    return _finish("alpha", phi, g, theta, {"image": image, "harmonic": phih}, phih, info, defining)


DECOMPOSITIONS = {"berger-ebin": berger_ebin, "york": york, "alpha": alpha_split}


def decomposition_report(result: DecompositionResult, tol=DEFAULT_TOL, check_id=None):
    rep = CheckReport(check_id or f"decompose.{result.kind}")
    d = result.diagnostics
    rep.add("reconstruction", d["reconstruction"], tol)
    for k, v in d["orthogonality"].items():
        rep.add(f"orthogonality.{k}", v, tol)
    for k, v in d["defining"].items():
        rep.add(f"defining.{k}", v, 1e-8 if k == "trace_relation" else tol)
    rep.note("iterations", d["iterations"])
    rep.note("part_norms", d["part_norms"])
    return rep


# ---------------------------------------------------------------------------
# corollary checks

def _require_harmonic(f: TorusMap, tol):
    t1 = theorem1_residual(f, tol)
    if t1.r1_rel > tol:
        raise ValueError(f"map {f.name} is not harmonic (delta g* + de/2 relative residual {t1.r1_rel:.3e})")
    return t1


def _variation(x, g):
    """Relative spread of a scalar field about its mean."""
    mean = g.grid.integrate(x, g.sqrt_det) / g.volume
    spread = np.sqrt(g.grid.integrate((x - mean) ** 2, g.sqrt_det) / g.volume)
    return float(mean), float(spread) / max(abs(mean), float(np.abs(x).max()), FLOOR)


def check_corollary1(f: TorusMap, tol=DEFAULT_TOL, method="cgls"):
    """Energy of a harmonic map whose Berger-Ebin potential is an infinitesimal
    harmonic transformation.

    With delta g* = -de/2 one gets de = -Delta_S theta - d delta theta, so for
    Delta_S theta = 0 the combination e + delta theta is constant and
    E = C Vol with C half that constant. The printed combination e - delta theta
    is reported alongside.
    """
    g = f.domain
    rep = CheckReport("corollary1")
    t1 = _require_harmonic(f, tol)
    rep.add("theorem1_r1", t1.r1_rel, tol)
    gstar = pullback_metric(f)
    be = berger_ebin(gstar, g, method)
    scale = derivative_scale(gstar, g)
    iht = _ratio(l2_norm(sampson_1form(be.theta, g), g), scale)
    rep.note("iht_residual", iht)
    if iht > tol:
        rep.note("iht", False)
        rep.skip("energy", "Berger-Ebin potential is not an infinitesimal harmonic transformation")
        return rep
    rep.note("iht", True)
    en = energy(f)
    div_theta = divergence(be.theta, g)
    const, spread = _variation(en.density + div_theta, g)
    _, spread_printed = _variation(en.density - div_theta, g)
    rep.add("e_plus_delta_theta_spread", spread, tol)
    rep.note("e_minus_delta_theta_spread", spread_printed)
    c = 0.5 * const
    rep.note("C", c)
    rep.note("energy", en.energy)
    rep.add("energy_vs_C_vol", _ratio(abs(en.energy - c * g.volume), abs(en.energy)), tol)
    return rep


def check_corollary2(f: TorusMap, tol=DEFAULT_TOL, method="cgls"):
    """York split of the pullback metric of a harmonic map.

    Harmonicity gives Delta_S theta = -(n - 2) d lambda; that residual carries
    the verdict and the printed-sign variant is reported for comparison.
    """
    g = f.domain
    n = g.dim
    rep = CheckReport("corollary2")
    t1 = _require_harmonic(f, tol)
    rep.add("theorem1_r1", t1.r1_rel, tol)
    if n == 2:
        rep.warnings.append("York splitting run in dimension 2")
    gstar = pullback_metric(f)
    yk = york(gstar, g, method)
    ds = sampson_1form(yk.theta, g)
    dlam = g.grid.gradient(yk.lam)
    scale = l2_norm(ds, g) + l2_norm(dlam, g) + FLOOR * max(derivative_scale(gstar, g), 1.0)
    rep.add("sampson_plus", _ratio(l2_norm(ds + (n - 2) * dlam, g), scale), tol)
    rep.note("sampson_minus_as_printed", _ratio(l2_norm(ds - (n - 2) * dlam, g), scale))
    if n > 2 and _ratio(l2_norm(ds, g), derivative_scale(gstar, g)) <= tol:
        lam_mean, spread = _variation(yk.lam, g)
        rep.add("lambda_spread", spread, tol)
        en = energy(f).energy
        vol = g.volume
        rep.note("energy", en)
        rep.note("lambda_vol", lam_mean * vol)
        rep.note("half_n_lambda_vol", 0.5 * n * lam_mean * vol)
        rep.note("rel_err_lambda_vol", _ratio(abs(en - lam_mean * vol), abs(en)))
        rep.note("rel_err_half_n_lambda_vol", _ratio(abs(en - 0.5 * n * lam_mean * vol), abs(en)))
    else:
        rep.skip("constant_lambda", "Delta_S theta does not vanish" if n > 2 else "dimension 2")
    return rep


def check_corollary3(g: MetricField, tol=DEFAULT_TOL, method="cgls"):
    """York split of the Ricci tensor and the total scalar curvature."""
    n = g.dim
    if n < 3:
        raise ValueError("corollary 3 needs dimension >= 3")
    rep = CheckReport("corollary3")
    cb = g.curvature
    yk = york(cb.ricci, g, method)
    div_theta = divergence(yk.theta, g)
    s = cb.scalar
    rep.add("scalar_trace_relation", _ratio(np.abs(s - (-div_theta + n * yk.lam)).max(), np.abs(s).max()), 1e-8)
    ds = sampson_1form(yk.theta, g)
    dlam = g.grid.gradient(yk.lam)
    scale = l2_norm(ds, g) + l2_norm(dlam, g) + FLOOR
    rep.add("sampson_plus", _ratio(l2_norm(ds + (n - 2) * dlam, g), scale), tol)
    rep.note("sampson_minus_as_printed", _ratio(l2_norm(ds - (n - 2) * dlam, g), scale))
    total = g.grid.integrate(s, g.sqrt_det)
    rep.note("total_scalar_curvature", total)
    if _ratio(l2_norm(ds, g), derivative_scale(cb.ricci, g)) <= tol:
        lam_mean, spread = _variation(yk.lam, g)
        if abs(lam_mean) > FLOOR or np.abs(yk.lam).max() > FLOOR:
            rep.add("lambda_spread", spread, tol)
        rep.add("total_vs_n_lambda_vol", _ratio(abs(total - n * lam_mean * g.volume),
                                                max(abs(total), 1.0)), tol)
        rep.note("half_total", 0.5 * total)
    else:
        rep.skip("constant_lambda", "Delta_S theta does not vanish")
    ok, node, eig = positive_definite_check(cb.ricci, g.grid)
    if ok:
        f = TorusMap.identity(g, GridMetric(MetricField(g.grid, cb.ricci)), "id_to_ricci")
        rep.add("theorem1_r1_id_to_ricci", theorem1_residual(f, tol).r1_rel, tol)
    else:
        rep.skip("id_to_ricci", f"Ric not positive definite at node {node} (eigenvalue {eig:.3e})")
    return rep
