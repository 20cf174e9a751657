"""Named checks run by the command line and the suite runner.

Each task takes a :class:`RunConfig` and returns a :class:`CheckReport`. Every
task draws random fields from its own generator seeded by (seed, task id), so
results do not depend on task order.
"""

from __future__ import annotations

import logging
import time
import zlib

import numpy as np

from . import fixtures
from .config import RunConfig
from .decompositions import (DECOMPOSITIONS, check_corollary1, check_corollary2, check_corollary3,
                             decomposition_report)
from .geometry import bianchi_residual
from .grid_field import spectral_diagnostics
from .harmonic_classes import classify
from .maps import energy, theorem1_residual
from .operators import adjointness_gap, alpha_handle, killing_handle
from .report import CheckReport
from .variations import (eh_variation_check, example1_check, example2_check, harmonic_family_check,
                         ricci_variation_check, scalar_variation_check, variation_report)

log = logging.getLogger(__name__)

ADJOINT_PAIRS = 10
FAMILY_T = (0.05, -0.05, 0.1, -0.1)
CRITICALITY_T = 1e-5


def task_rng(cfg: RunConfig, task_id):
    return np.random.default_rng([cfg.seed, zlib.crc32(task_id.encode())])


def harmonic_direction(cfg: RunConfig, rng, kmax=2):
    """Harmonic part of a seeded random field, scaled to unit max-abs."""
    g = cfg.domain_metric
    phi = fixtures.random_field(g.grid, rng, 2, kmax=kmax)
    ph = DECOMPOSITIONS["alpha"](phi, g).residual_part
    return ph / np.abs(ph).max()


def _is_flat(g):
    n = g.dim
    return bool(np.abs(g.g - np.eye(n).reshape((n, n) + (1,) * n)).max() == 0.0)


def task_bianchi(cfg):
    return CheckReport("bianchi").add("relative", bianchi_residual(cfg.domain_metric, relative=True), cfg.rel_tol)


def task_adjointness(cfg):
    g = cfg.domain_metric
    rng = task_rng(cfg, "adjointness")
    rep = CheckReport("adjointness")
    for handle in (killing_handle(g), alpha_handle(g)):
        worst = 0.0
        for _ in range(ADJOINT_PAIRS):
            x = fixtures.random_field(g.grid, rng, 1)
            y = fixtures.random_field(g.grid, rng, 2)
            worst = max(worst, adjointness_gap(handle, x, y))
        rep.add(handle.name, worst, 1e-8)
    return rep


def task_energy(cfg):
    f = cfg.build_map()
    en = energy(f)
    rep = CheckReport("energy")
    rep.note("energy", en.energy)
    rep.note("constant_map", en.constant_map)
    rep.add("min_density", max(0.0, -float(en.density.min())), 1e-12)
    g = f.domain
    if f.name == "identity" and np.array_equal(f.codomain_metric, g.g):
        anchor = 0.5 * g.dim * g.volume
        rep.add("identity_energy_anchor", abs(en.energy - anchor) / anchor, 1e-10)
    return rep


def task_theorem1(cfg):
    t1 = theorem1_residual(cfg.build_map(), cfg.rel_tol)
    rep = CheckReport("theorem1")
    rep.add("proof_identity_r2", t1.r2_rel, max(cfg.rel_tol * 0.1, 1e-7))
    rep.note("r1", t1.r1_rel)
    rep.note("tension", t1.tension_rel)
    rep.note("rank_ok", t1.rank_ok)
    rep.note("harmonic_by_converse", t1.converse_harmonic)
    return rep


def _decomposition_task(kind):
    def run(cfg):
        g = cfg.domain_metric
        phi = fixtures.random_field(g.grid, task_rng(cfg, kind), 2)
        res = DECOMPOSITIONS[kind](phi, g)
        return decomposition_report(res, cfg.rel_tol)
    return run


def task_corollary1(cfg):
    return check_corollary1(cfg.build_map(), cfg.rel_tol)


def task_corollary2(cfg):
    return check_corollary2(cfg.build_map(), cfg.rel_tol)


def task_corollary3(cfg):
    return check_corollary3(cfg.domain_metric, cfg.rel_tol)


def task_classify(cfg):
    g = cfg.domain_metric
    ph = harmonic_direction(cfg, task_rng(cfg, "classify"), kmax=4)
    rep = CheckReport("classify")
    base = classify(ph, g, cfg.rel_tol)
    rep.add("pythagoras", base.pythagoras, 1e-8)
    for k, v in base.constraint_residuals.items():
        rep.add(k, v, 1e-8)
    rep.note("labels", list(base.labels))
    rep.note("component_norms", base.component_norms)
    rep.note("structure_residuals", base.structure_residuals)
    stable = all(classify(c * ph, g, cfg.rel_tol).labels == base.labels for c in (1e-3, 1e3))
    rep.add("label_scale_instability", 0.0 if stable else 1.0, 0.0)
    return rep


def task_variations(cfg):
    g = cfg.domain_metric
    ph = harmonic_direction(cfg, task_rng(cfg, "variations"))
    rep = CheckReport("variations")
    for check in (ricci_variation_check, scalar_variation_check):
        sub = variation_report(check(g, ph), 1e-5)
        for k, v in sub.residuals.items():
            rep.add(f"{sub.check_id}.{k}", v, sub.tolerances[k])
    eh = eh_variation_check(g, ph)
    sub = variation_report(eh, 1e-5)
    for k, v in sub.residuals.items():
        rep.add(f"{sub.check_id}.{k}", v, sub.tolerances[k])
    if _is_flat(g):
        crit = eh_variation_check(g, ph, CRITICALITY_T)
        rep.add("flat_criticality", abs(crit.measured), 1e-8)
    return rep


def task_harmonic_family(cfg):
    g = cfg.domain_metric
    ph = harmonic_direction(cfg, task_rng(cfg, "harmonic-family"))
    return harmonic_family_check(g, ph, FAMILY_T, cfg.rel_tol)


def task_example1(cfg):
    return example1_check(cfg.domain_metric, cfg.rel_tol)


def task_example2(cfg):
    return example2_check(cfg.domain_metric, cfg.rel_tol)


TASKS = {
    "bianchi": task_bianchi,
    "adjointness": task_adjointness,
    "energy": task_energy,
    "theorem1": task_theorem1,
    "berger-ebin": _decomposition_task("berger-ebin"),
    "york": _decomposition_task("york"),
    "alpha": _decomposition_task("alpha"),
    "corollary1": task_corollary1,
    "corollary2": task_corollary2,
    "corollary3": task_corollary3,
    "classify": task_classify,
    "variations": task_variations,
    "harmonic-family": task_harmonic_family,
    "example1": task_example1,
    "example2": task_example2,
}


def default_tasks(cfg: RunConfig):
    tasks = ["bianchi", "adjointness", "energy", "theorem1", "berger-ebin", "york", "alpha",
             "classify", "variations", "harmonic-family", "example1"]
    if cfg.dim == 3:
        tasks += ["corollary3", "example2"]
    return tasks


def run_task(cfg: RunConfig, task_id, timing=False):
    start = time.perf_counter()
    fn = TASKS.get(task_id)
    if fn is None:
        rep = CheckReport(task_id, error=f"unknown task id {task_id!r} (known: {', '.join(sorted(TASKS))})")
    else:
        try:
            rep = fn(cfg)
        except Exception as exc:  # a failing check never aborts the suite
            log.debug("task %s raised", task_id, exc_info=True)
            rep = CheckReport(task_id, error=f"{type(exc).__name__}: {exc}")
    meta = {"resolution": cfg.resolution, "dim": cfg.dim, "seed": cfg.seed}
    if timing:
        meta["runtime_ms"] = round(1000 * (time.perf_counter() - start), 3)
    rep.metadata.update(meta)
    return rep


def run_suite(cfg: RunConfig, tasks=None, timing=False):
    """Run tasks in order; returns (reports, exit code 0 if nothing failed else 1)."""
    tasks = list(tasks or cfg.tasks or default_tasks(cfg))
    reports = []
    tail = spectral_diagnostics(cfg.domain_metric.g, cfg.grid)
    for task_id in tasks:
        rep = run_task(cfg, task_id, timing)
        rep.warnings.extend(tail.warnings)
        reports.append(rep)
    code = 1 if any(r.status == "fail" for r in reports) else 0
    return reports, code
