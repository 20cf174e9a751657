"""Run configuration: a JSON file describing the torus, metric, optional map and tasks.

Example::

    {
      "manifold": {"dim": 2, "resolution": 32},
      "metric": {"11": "exp(0.2*sin(x1))", "12": "0", "22": "exp(0.2*sin(x1))"},
      "codomain_metric": "flat",
      "map": {"winding": [[1, 0], [0, 1]], "displacement": ["0.1*sin(x2)", "0"]},
      "tasks": ["bianchi", "theorem1"],
      "tolerances": {"rel_tol": 1e-6, "floor": 1e-12},
      "seed": 1
    }

``metric`` (and ``codomain_metric``) is ``"flat"``, an upper-triangle mapping
of component expressions, or ``{"fixture": NAME}`` for a built-in fixture.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from . import fixtures
from .expression import ExpressionError, as_expression, check_periodic, evaluate
from .geometry import GeometryError, MetricField, positive_definite_check
from .grid_field import Grid
from .maps import ExpressionMetric, GridMetric, TorusMap

FIXTURES = {
    "flat_t2": lambda res: fixtures.flat(2, res or 32),
    "flat_t3": lambda res: fixtures.flat(3, res or 24),
    "conformal_t2": lambda res: fixtures.conformal_t2(res or 32),
    "bump_t3": lambda res: fixtures.bump_t3(res or 24),
}
FIXTURE_DIMS = {"flat_t2": 2, "flat_t3": 3, "conformal_t2": 2, "bump_t3": 3}
KNOWN_KEYS = {"manifold", "metric", "codomain_metric", "map", "tasks", "tolerances", "seed"}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    dim: int
    resolution: int
    metric: object = "flat"
    codomain_metric: object = None
    map: dict | None = None
    tasks: list = field(default_factory=list)
    rel_tol: float = 1e-6
    floor: float = 1e-12
    seed: int = 1

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ConfigError(f"dim must be 2 or 3, got {self.dim}")
        try:
            Grid(self.dim, self.resolution)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not 0 < self.rel_tol < 1:
            raise ConfigError(f"rel_tol must lie in (0, 1), got {self.rel_tol}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ConfigError(f"seed must be an integer, got {self.seed!r}")

    @cached_property
    def grid(self):
        return Grid(self.dim, self.resolution)

    def _expression_metric(self, spec, what):
        if spec == "flat":
            return ExpressionMetric.flat(self.dim)
        if isinstance(spec, dict) and "fixture" not in spec:
            try:
                return ExpressionMetric.from_upper(self.dim, spec)
            except (ExpressionError, ValueError) as exc:
                raise ConfigError(f"{what}: {exc}") from None
        return None

    def _metric_field(self, spec, what):
        if isinstance(spec, dict) and "fixture" in spec:
            name = spec["fixture"]
            if name not in FIXTURES:
                raise ConfigError(f"{what}: unknown fixture {name!r} (known: {sorted(FIXTURES)})")
            if FIXTURE_DIMS[name] != self.dim:
                raise ConfigError(f"{what}: fixture {name} has dimension {FIXTURE_DIMS[name]}, config says {self.dim}")
            return FIXTURES[name](self.resolution)
        em = self._expression_metric(spec, what)
        if em is None:
            raise ConfigError(f"{what}: expected 'flat', a component mapping or a fixture")
        values = em.values(self.grid.coords)
        ok, node, eig = positive_definite_check(values, self.grid)
        if not ok:
            raise ConfigError(f"{what} not positive definite at node {node} (smallest eigenvalue {eig:.6g})")
        return MetricField(self.grid, values)

    @cached_property
    def domain_metric(self) -> MetricField:
        return self._metric_field(self.metric, "metric")

    def codomain(self):
        spec = self.codomain_metric if self.codomain_metric is not None else self.metric
        em = self._expression_metric(spec, "codomain_metric")
        if em is not None:
            return em
        return GridMetric(self._metric_field(spec, "codomain_metric"))

    def build_map(self, name="map"):
        """The configured map, or the identity onto the codomain metric."""
        g = self.domain_metric
        cod = self.codomain()
        if self.map is None:
            return TorusMap.identity(g, cod, "identity")
        winding = self.map.get("winding", np.eye(self.dim, dtype=int).tolist())
        disp = self.map.get("displacement")
        u = None
        if disp is not None:
            if len(disp) != cod.dim:
                raise ConfigError(f"map: expected {cod.dim} displacement expressions, got {len(disp)}")
            comps = []
            for text in disp:
                try:
                    expr = as_expression(text)
                    check_periodic(expr, self.dim)
                except ExpressionError as exc:
                    raise ConfigError(f"map displacement: {exc}") from None
                comps.append(evaluate(expr, self.grid.coords))
            u = np.array(comps)
        try:
            return TorusMap(g, cod, np.array(winding), u, name)
        except ValueError as exc:
            raise ConfigError(f"map: {exc}") from None

    def validate(self):
        """Resolve everything once so configuration errors surface up front."""
        self.domain_metric
        self.codomain()
        if self.map is not None:
            self.build_map()
        return self


def config_from_dict(d, resolution=None, seed=None):
    if not isinstance(d, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = set(d) - KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown configuration keys {sorted(unknown)}")
    man = d.get("manifold", {})
    if "dim" not in man:
        raise ConfigError("manifold.dim is required")
    dim = man["dim"]
    res = resolution or man.get("resolution") or (32 if dim == 2 else 24)
    tol = d.get("tolerances", {})
    tasks = d.get("tasks", [])
    if not isinstance(tasks, list) or not all(isinstance(t, str) for t in tasks):
        raise ConfigError("tasks must be a list of strings")
    cfg = RunConfig(dim=dim, resolution=res, metric=d.get("metric", "flat"),
                    codomain_metric=d.get("codomain_metric"), map=d.get("map"), tasks=tasks,
                    rel_tol=float(tol.get("rel_tol", 1e-6)), floor=float(tol.get("floor", 1e-12)),
                    seed=d.get("seed", 1) if seed is None else seed)
    try:
        return cfg.validate()
    except (GeometryError, ExpressionError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path, resolution=None, seed=None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON ({exc.msg} at line {exc.lineno})") from None
    return config_from_dict(data, resolution, seed)


def fixture_config(name, resolution=None, seed=1, tasks=()):
    if name not in FIXTURES:
        raise ConfigError(f"unknown fixture {name!r} (known: {sorted(FIXTURES)})")
    return RunConfig(FIXTURE_DIMS[name], resolution or (32 if FIXTURE_DIMS[name] == 2 else 24),
                     {"fixture": name}, None, None, list(tasks), seed=seed)
