"""Line-oriented ``section.key = value`` configuration.

Grammar: one assignment per line, ``#`` starts a comment, blank lines are
ignored, keys have exactly one dot. Every problem (unknown key, bad value,
failed construction) is collected with its line number and raised together
as a :class:`ConfigError`.

Value syntax: numbers accept ``inf``/``-inf``; lists are comma separated;
``warping.params`` is either a list of raw coefficients or ``name=value``
pairs (required for ``warping.family = einstein``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

from .cmc_solver import MODES, PRECONDITIONERS, LineSearch, SolverConfig
from .errors import ConfigError, GRWError
from .experiments import TAGS
from .fiber import FiberGrid
from .warping import FAMILIES, Interval, WarpingFunction, make_einstein_family

TOPOLOGIES = ("torus", "sphere")
GRAPH_KINDS = ("perturbed", "slice", "analytic")
WARPING_KINDS = tuple(f for f in FAMILIES if f != "custom-analytic") + ("einstein",)


def _float(s):
    return float(s)


def _int(s):
    v = float(s)
    if v != int(v):
        raise ValueError(f"expected an integer, got {s!r}")
    return int(v)


def _bool(s):
    low = s.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _choice(options):
    def parse(s):
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}; got {s!r}")
        return s
    return parse


def _floats(count=None):
    def parse(s):
        vals = tuple(float(x) for x in s.split(",") if x.strip())
        if count is not None and len(vals) != count:
            raise ValueError(f"expected {count} comma-separated numbers, got {len(vals)}")
        return vals
    return parse


def _ints(s):
    return tuple(_int(x) for x in s.split(",") if x.strip())


def _params(s):
    """Either "1, 2" -> tuple or "a=1, eps=-1" -> dict."""
    parts = [p.strip() for p in s.split(",") if p.strip()]
    if parts and all("=" in p for p in parts):
        out = {}
        for p in parts:
            k, _, v = p.partition("=")
            out[k.strip()] = float(v)
        return out
    if any("=" in p for p in parts):
        raise ValueError("mix of positional and named parameters")
    return tuple(float(p) for p in parts)


def _optional(parse):
    def inner(s):
        return None if s.lower() in ("none", "") else parse(s)
    return inner


# key -> (parser, default)
SCHEMA: dict[str, tuple[Callable[[str], Any], Any]] = {
    "warping.family": (_choice(WARPING_KINDS), "constant"),
    "warping.params": (_params, (1.0,)),
    "warping.domain": (_floats(2), (-math.inf, math.inf)),
    "warping.ref_point": (_optional(_float), None),
    "warping.case": (_int, None),
    "warping.c_bar": (_float, None),
    "warping.c": (_float, None),
    "fiber.topology": (_choice(TOPOLOGIES), "torus"),
    "fiber.size": (_int, 64),
    "fiber.length": (_float, 1.0),
    "fiber.radius": (_float, 1.0),
    "fiber.n": (_int, 2),
    "graph.kind": (_choice(GRAPH_KINDS), "perturbed"),
    "graph.t0": (_float, 0.0),
    "graph.seed": (_int, 0),
    "graph.amplitude": (_optional(_float), None),
    "graph.target_margin": (_float, 0.45),
    "graph.modes": (_int, 4),
    "graph.l_min": (_int, 1),
    "graph.even_only": (_bool, False),
    "solver.lambda_cap": (_float, 0.9),
    "solver.residual_tol": (_optional(_float), None),
    "solver.max_newton_iters": (_int, 50),
    "solver.max_linear_iters": (_int, 200),
    "solver.mode": (_choice(MODES), "fixed-c"),
    "solver.flow_pretol": (_float, 1e-3),
    "solver.flow_max_iters": (_int, 100),
    "solver.preconditioner": (_choice(PRECONDITIONERS), "compact-lu"),
    "solver.anchor_t": (_optional(_float), None),
    "solver.c": (_optional(_float), None),
    "solver.shrink": (_float, 0.5),
    "solver.min_step": (_float, 2.0 ** -12),
    "solver.armijo": (_float, 1e-4),
    "run.subcommand": (_optional(str), None),
    "run.out": (_optional(str), None),
    "run.refine": (_int, 3),
    "run.base_size": (_int, 64),
    "run.t_range": (_optional(_floats(2)), None),
    "run.samples": (_int, 1000),
    "run.dims": (_ints, (2, 3)),
    "experiment.tag": (_choice(TAGS), "log-concave"),
    "experiment.seeds": (_int, 10),
    "experiment.c": (_optional(_float), None),
    "experiment.slab": (_optional(_floats(2)), None),
    "experiment.workers": (_int, 1),
}


@dataclass
class ExperimentConfig:
    """Resolved configuration plus the objects built from it."""

    values: dict
    lines: dict = field(default_factory=dict)
    warping: WarpingFunction | None = None
    fiber: FiberGrid | None = None
    solver: SolverConfig | None = None

    def __getitem__(self, key):
        return self.values[key]

    def resolved(self) -> dict:
        """Flat {key: value} of every setting, defaults included."""
        return dict(self.values)

    def with_overrides(self, **kv) -> "ExperimentConfig":
        text = "\n".join(f"{k} = {_unparse(v)}" for k, v in {**self.values, **kv}.items()
                         if v is not None)
        return parse_config(text)


def _unparse(v):
    if isinstance(v, dict):
        return ", ".join(f"{k}={x!r}" for k, x in v.items())
    if isinstance(v, (tuple, list)):
        return ", ".join(repr(x) for x in v)
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def parse_config(text: str) -> ExperimentConfig:
    errors: list[tuple[int | None, str]] = []
    values = {k: d for k, (_, d) in SCHEMA.items()}
    lines: dict[str, int] = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append((ln, f"expected 'section.key = value', got {raw.strip()!r}"))
            continue
        key, _, val = (part.strip() for part in line.partition("="))
        if key.count(".") != 1:
            errors.append((ln, f"key {key!r} must have the form section.key"))
            continue
        if key not in SCHEMA:
            errors.append((ln, f"unknown key {key!r}"))
            continue
        if key in lines:
            errors.append((ln, f"duplicate key {key!r} (first set on line {lines[key]})"))
            continue
        lines[key] = ln
        try:
            values[key] = SCHEMA[key][0](val)
        except (ValueError, TypeError) as exc:
            errors.append((ln, f"{key}: {exc}"))
    # Semantic checks run even after syntax errors (failed keys keep their
    # defaults) so that one pass reports every problem.
    cfg = ExperimentConfig(values, lines)
    _build(cfg, errors)
    if errors:
        raise ConfigError(sorted(errors, key=lambda e: (e[0] is None, e[0] or 0)))
    return cfg


def _line(cfg, *keys):
    for k in keys:
        if k in cfg.lines:
            return cfg.lines[k]
    return None


def _build(cfg: ExperimentConfig, errors):
    v = cfg.values

    def attempt(keys, fn):
        try:
            return fn()
        except (GRWError, ValueError, TypeError) as exc:
            errors.append((_line(cfg, *keys), str(exc)))
            return None

    if v["fiber.n"] != 2:
        errors.append((_line(cfg, "fiber.n"), f"only 2-dimensional fibers are supported, got n = {v['fiber.n']}"))
    cfg.fiber = attempt(("fiber.topology", "fiber.size", "fiber.length", "fiber.radius"),
                        lambda: _make_fiber(v))
    cfg.warping = attempt(("warping.params", "warping.family", "warping.case", "warping.c_bar",
                           "warping.c", "warping.domain"), lambda: _make_warping(v))

    def solver():
        return SolverConfig(
            lambda_cap=v["solver.lambda_cap"], residual_tol=v["solver.residual_tol"],
            max_newton_iters=v["solver.max_newton_iters"], max_linear_iters=v["solver.max_linear_iters"],
            damping=LineSearch(v["solver.shrink"], v["solver.min_step"], v["solver.armijo"]),
            mode=v["solver.mode"], flow_pretol=v["solver.flow_pretol"],
            flow_max_iters=v["solver.flow_max_iters"], seed=v["graph.seed"],
            anchor_t=v["solver.anchor_t"], preconditioner=v["solver.preconditioner"])

    if not 0.0 < v["solver.lambda_cap"] < 1.0:
        errors.append((_line(cfg, "solver.lambda_cap"), "lambda_cap must lie in (0,1)"))
    else:
        cfg.solver = attempt(("solver.residual_tol", "solver.max_newton_iters",
                              "solver.max_linear_iters", "solver.flow_max_iters"), solver)
    if not 0.0 < v["graph.target_margin"] < 1.0:
        errors.append((_line(cfg, "graph.target_margin"), "target_margin must lie in (0,1)"))
    if v["run.refine"] < 1:
        errors.append((_line(cfg, "run.refine"), "refine must be at least 1"))
    if v["experiment.seeds"] < 1:
        errors.append((_line(cfg, "experiment.seeds"), "seeds must be at least 1"))


def _make_fiber(v) -> FiberGrid:
    if v["fiber.topology"] == "torus":
        return FiberGrid.torus(v["fiber.size"], v["fiber.length"])
    return FiberGrid.sphere(v["fiber.size"], radius=v["fiber.radius"])


def _make_warping(v) -> WarpingFunction:
    lo, hi = v["warping.domain"]
    domain = Interval(lo, hi)
    params = v["warping.params"]
    if v["warping.family"] == "einstein":
        for key in ("warping.case", "warping.c_bar", "warping.c"):
            if v[key] is None:
                raise ValueError(f"einstein warping needs {key}")
        if not isinstance(params, dict):
            raise ValueError("einstein warping needs named params, e.g. 'a=1, eps=1'")
        bounded = None if (math.isinf(lo) and math.isinf(hi)) else domain
        return make_einstein_family(v["warping.case"], v["fiber.n"], v["warping.c_bar"],
                                    v["warping.c"], params, bounded, v["warping.ref_point"])
    if isinstance(params, dict):
        raise ValueError(f"family {v['warping.family']!r} takes positional params")
    return WarpingFunction(v["warping.family"], params, domain, v["warping.ref_point"])


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
