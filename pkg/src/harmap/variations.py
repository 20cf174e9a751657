"""First variations along g + t phi checked against central differences,
harmonic-metric families and the identity-map examples.

Sign conventions follow the rest of the package: Laplace = div grad and
lichnerowicz_sym2(phi) = Laplace phi + 2 R o phi - Ric o phi - phi o Ric.
In that convention the Ricci variation is

    Ric' = -1/2 lichnerowicz(phi) - delta* delta phi - 1/2 Hess(trace phi),

which for harmonic phi (delta phi = -1/2 d trace phi) collapses to
Ric' = -1/2 lichnerowicz(phi).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import (GeometryError, MetricField, cross_curvature, divergence, hessian,
                       min_eigenvalue, positive_definite_check)
from .grid_field import l2_inner_product, l2_norm
from .harmonic_classes import harmonic_tensor_relative
from .maps import GridMetric, TorusMap, tension_residual, theorem1_residual
from .operators import alpha_g_adjoint, killing_operator, lichnerowicz_sym2, rough_laplacian
from .report import CheckReport

FLOOR = 1e-12
T_DEFAULT = 1e-3
RATIO_BAND = (3.0, 5.0)


@dataclass
class VariationResult:
    name: str
    predicted: object
    measured: object
    rel_error: float
    rel_error_half: float
    convergence_ratio: float | None
    shortcut_gap: float | None = None
    extra: dict = field(default_factory=dict)

    def ratio_ok(self, band=RATIO_BAND):
        return self.convergence_ratio is None or band[0] <= self.convergence_ratio <= band[1]


def _perturbed_pair(g: MetricField, phi, t):
    try:
        return g.perturbed(phi, t), g.perturbed(phi, -t)
    except GeometryError as exc:
        raise GeometryError(f"g +- {t} phi is not positive definite: {exc}") from None


def _field_error(pred, meas, g, rank):
    diff = l2_norm(pred - meas, g, rank)
    return diff, diff / max(l2_norm(meas, g, rank), l2_norm(pred, g, rank), FLOOR)


def _scalar_error(pred, meas, floor=1e-10):
    """Relative error with an absolute floor: integrals that vanish identically
    (flat metrics, S = 0 in dimension 2) are then compared absolutely."""
    diff = abs(pred - meas)
    return diff, diff / max(abs(meas), abs(pred), floor)


def _ratio(e_t, e_half, noise):
    if e_t <= 100 * noise or e_half <= 0:
        return None
    return e_t / e_half


def ricci_variation_formula(g: MetricField, phi):
    lap_part = -0.5 * lichnerowicz_sym2(phi, g)
    div_part = -killing_operator(divergence(phi, g), g)
    hess_part = -0.5 * hessian(g.trace(phi), g)
    return lap_part + div_part + hess_part


def ricci_harmonic_shortcut(g: MetricField, phi):
    return -0.5 * lichnerowicz_sym2(phi, g)


def ricci_variation_check(g: MetricField, phi, t=T_DEFAULT, harmonic_tol=1e-6):
    """Compare the Ricci variation formula with [Ric(g+t phi) - Ric(g-t phi)]/(2t)."""
    pred = ricci_variation_formula(g, phi)
    errs, meas_t = [], None
    for tt in (t, t / 2):
        gp, gm = _perturbed_pair(g, phi, tt)
        meas = (gp.curvature.ricci - gm.curvature.ricci) / (2 * tt)
        meas_t = meas if meas_t is None else meas_t
        errs.append(_field_error(pred, meas, g, 2))
    gap = None
    if harmonic_tensor_relative(phi, g) <= harmonic_tol:
        short = ricci_harmonic_shortcut(g, phi)
        gap = l2_norm(short - pred, g) / max(l2_norm(pred, g), FLOOR)
    noise = 1e-13 * max(l2_norm(pred, g), 1.0) / t
    return VariationResult("ricci", pred, meas_t, errs[0][1], errs[1][1],
                           _ratio(errs[0][0], errs[1][0], noise), gap)


def scalar_variation_formula(g: MetricField, phi):
    tr = g.trace(phi)
    ric = g.curvature.ricci
    return (-rough_laplacian(tr, g) + divergence(divergence(phi, g), g)
            - np.einsum("ij...,ij...->...", g.raise_index(g.raise_index(ric, 0), 1), phi))


def scalar_harmonic_shortcut(g: MetricField, phi):
    ric = g.curvature.ricci
    return (-0.5 * rough_laplacian(g.trace(phi), g)
            - np.einsum("ij...,ij...->...", g.raise_index(g.raise_index(ric, 0), 1), phi))


def scalar_variation_check(g: MetricField, phi, t=T_DEFAULT, harmonic_tol=1e-6):
    pred = scalar_variation_formula(g, phi)
    errs, meas_t = [], None
    for tt in (t, t / 2):
        gp, gm = _perturbed_pair(g, phi, tt)
        meas = (gp.curvature.scalar - gm.curvature.scalar) / (2 * tt)
        meas_t = meas if meas_t is None else meas_t
        errs.append(_field_error(pred, meas, g, 0))
    gap = None
    if harmonic_tensor_relative(phi, g) <= harmonic_tol:
        short = scalar_harmonic_shortcut(g, phi)
        gap = l2_norm(short - pred, g, 0) / max(l2_norm(pred, g, 0), FLOOR)
    noise = 1e-13 * max(l2_norm(pred, g, 0), 1.0) / t
    return VariationResult("scalar", pred, meas_t, errs[0][1], errs[1][1],
                           _ratio(errs[0][0], errs[1][0], noise), gap)


def total_scalar_curvature(g: MetricField):
    return float(g.grid.integrate(g.curvature.scalar, g.sqrt_det))


def eh_variation_check(g: MetricField, phi, t=T_DEFAULT, harmonic_tol=1e-6, require_harmonic=True):
    """d/dt S(g + t phi) at t = 0 against -<E_g, phi>."""
    if require_harmonic:
        rel = harmonic_tensor_relative(phi, g)
        if rel > harmonic_tol:
            raise ValueError(f"direction is not a harmonic tensor (relative residual {rel:.3e})")
    ein = g.curvature.einstein
    pred = -l2_inner_product(ein, phi, g, 2)
    # Cauchy-Schwarz bound on |<E, phi>|: the derivative of a scalar functional is
    # judged against its operator size, so a direction where it nearly cancels
    # does not inflate the error. The plain ratio is kept in ``extra``.
    cs = l2_norm(ein, g, 2) * l2_norm(phi, g, 2)
    errs, plain, meas_t = [], [], None
    for tt in (t, t / 2):
        gp, gm = _perturbed_pair(g, phi, tt)
        meas = (total_scalar_curvature(gp) - total_scalar_curvature(gm)) / (2 * tt)
        meas_t = meas if meas_t is None else meas_t
        diff, rel = _scalar_error(pred, meas)
        errs.append((diff, diff / max(abs(pred), abs(meas), cs, 1e-10)))
        plain.append(rel)
    noise = 1e-13 * max(abs(pred), 1.0) / t
    return VariationResult("einstein-hilbert", pred, meas_t, errs[0][1], errs[1][1],
                           _ratio(errs[0][0], errs[1][0], noise),
                           extra={"cauchy_schwarz_scale": cs, "rel_error_plain": plain[0],
                                  "rel_error_plain_half": plain[1]})


def volume_variation_check(g: MetricField, phi, t=T_DEFAULT):
    pred = 0.5 * g.grid.integrate(g.trace(phi), g.sqrt_det)
    errs, meas_t = [], None
    for tt in (t, t / 2):
        gp, gm = _perturbed_pair(g, phi, tt)
        meas = (gp.volume - gm.volume) / (2 * tt)
        meas_t = meas if meas_t is None else meas_t
        errs.append(_scalar_error(pred, meas))
    noise = 1e-13 * max(abs(pred), 1.0) / t
    return VariationResult("volume", pred, meas_t, errs[0][1], errs[1][1],
                           _ratio(errs[0][0], errs[1][0], noise))


def variation_report(res: VariationResult, tol=1e-5, check_id=None):
    rep = CheckReport(check_id or f"variation.{res.name}")
    rep.add("rel_error", res.rel_error, tol)
    if res.convergence_ratio is None:
        rep.note("convergence_ratio", "below noise floor")
    else:
        rep.add("ratio_deviation", abs(res.convergence_ratio - 4.0), 1.0)
        rep.note("convergence_ratio", res.convergence_ratio)
    if res.shortcut_gap is not None:
        rep.add("harmonic_shortcut_gap", res.shortcut_gap, 1e-8)
    for k, v in res.extra.items():
        if isinstance(v, float):
            rep.note(k, v)
    return rep


# ---------------------------------------------------------------------------
# harmonic metric families

@dataclass
class MetricFamily:
    base: MetricField
    direction: np.ndarray
    t_values: list
    pd_certificate: dict


def family_epsilon(g: MetricField, phi, iters=60):
    """Largest t (by bisection) with min eig(g +- t phi) >= min eig(g) / 2."""
    target = 0.5 * min_eigenvalue(g.g, g.grid)

    def ok(t):
        return min(min_eigenvalue(g.g + t * phi, g.grid), min_eigenvalue(g.g - t * phi, g.grid)) >= target

    hi = 1.0
    while ok(hi) and hi < 1e6:
        hi *= 2
    if ok(hi):
        return hi
    lo = 0.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if ok(mid) else (lo, mid)
    return lo


def membership_residual(g: MetricField, gbar):
    """alpha_g^*(gbar) relative to the derivative scale of gbar."""
    scale = l2_norm(g.grid.gradient(gbar), g)
    return l2_norm(alpha_g_adjoint(gbar, g), g) / max(scale, FLOOR)


def harmonic_family_check(g: MetricField, phi, t_values, tol=1e-6, require_harmonic=True):
    """Identity maps id: (M, g) -> (M, g + t phi) along a harmonic direction."""
    rep = CheckReport("harmonic_family")
    rel = harmonic_tensor_relative(phi, g)
    rep.note("direction_harmonic_residual", rel)
    if require_harmonic and rel > tol:
        raise ValueError(f"direction is not a harmonic tensor (relative residual {rel:.3e})")
    for t in t_values:
        gt = g.g + t * phi
        ok, node, eig = positive_definite_check(gt, g.grid)
        if not ok:
            rep.skip(f"t={t!r}", f"g + t phi not positive definite at node {node} (eigenvalue {eig:.3e})")
            continue
        f = TorusMap.identity(g, GridMetric(MetricField(g.grid, gt)), f"id_t={t!r}")
        t1 = theorem1_residual(f, tol)
        _, tens = tension_residual(f)
        rep.add(f"t={t!r}.theorem1_r1", t1.r1_rel, tol)
        rep.add(f"t={t!r}.tension", tens, tol)
        rep.add(f"t={t!r}.membership", membership_residual(g, gt), tol)
    return rep


# ---------------------------------------------------------------------------
# identity-map examples

def example1_check(g: MetricField, tol=1e-6, target=None):
    """Contracted Bianchi identity and, when Ric (or -Ric) is definite, the
    harmonicity of id: (M, g) -> (M, +-Ric).

    ``target`` substitutes another symmetric field for Ric (a test seam for
    exercising the map-level leg on tori, where Ric is never definite).
    """
    rep = CheckReport("example1")
    cb = g.curvature
    ric = cb.ricci if target is None else np.asarray(target, dtype=float)
    res = alpha_g_adjoint(cb.ricci, g)
    rep.add("bianchi", l2_norm(res, g) / max(l2_norm(cb.ricci, g), FLOOR), tol)
    for sign, label in ((1.0, "Ric"), (-1.0, "-Ric")):
        ok, node, eig = positive_definite_check(sign * ric, g.grid)
        if ok:
            f = TorusMap.identity(g, GridMetric(MetricField(g.grid, sign * ric)), f"id_to_{label}")
            _, tens = tension_residual(f)
            rep.add(f"tension_id_to_{label}", tens, tol)
            rep.add(f"membership_{label}", membership_residual(g, sign * ric), tol)
            break
    else:
        rep.skip("identity_map", "criterion holds; map-level check unavailable on this fixture "
                 f"(neither Ric nor -Ric definite; e.g. node {node}, eigenvalue {eig:.3e})")
    return rep


def example2_check(g: MetricField, tol=1e-6, det_tol=1e-10, einstein=None):
    """Cross-curvature identity, gated on an invertible Einstein tensor.

    ``einstein`` substitutes a divergence-free symmetric field for E (a test
    seam: torus fixtures never have E invertible at every node).
    """
    if g.dim != 3:
        raise ValueError("example 2 needs dimension 3")
    rep = CheckReport("example2")
    try:
        cc = cross_curvature(g, det_tol, einstein)
    except GeometryError as exc:
        rep.skip("cross_curvature", f"precondition unmet on fixture: {exc}")
        return rep
    rep.add("identity", cc.identity_relative, tol)
    cr = cc.tensor
    rep.note("min_abs_det_E", cc.min_abs_det)
    rep.note("cr_asymmetry", float(np.abs(cr - np.swapaxes(cr, 0, 1)).max()))
    rep.note("map_direction", "id: (M, Cr) -> (M, g) as printed, the reverse of example 1")
    for sign, label in ((1.0, "Cr"), (-1.0, "-Cr")):
        ok, _, _ = positive_definite_check(sign * cr, g.grid)
        if ok:
            # id: (M, Cr) -> (M, g), the roles as printed
            dom = MetricField(g.grid, sign * cr)
            f = TorusMap.identity(dom, GridMetric(g), f"id_{label}_to_g")
            rep.add(f"theorem1_r1_{label}", theorem1_residual(f, tol).r1_rel, tol)
            break
    else:
        rep.skip("identity_map", "neither Cr nor -Cr positive definite on this fixture")
    return rep
