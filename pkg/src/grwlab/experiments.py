"""Batches of perturbed-slice solves compared against the rigidity theorems.

Each tag pairs a hypothesis check on the spacetime (and, where the
hypothesis involves the hypersurface, on each solution) with a conclusion
check on the converged solutions:

=================  ===================================  ==========================
tag                hypothesis                           conclusion
=================  ===================================  ==========================
umbilical-ncc      NCC on the slab                      totally umbilical
slice-strict-ncc   strict NCC on the slab               slice
pinching           proper f, NCC, H^2 >= (f'/f)^2(u)    slice with c^2 = (f'/f)^2
monotone           NCC, f monotone, H f' <= 0           totally geodesic
log-concave        (log f)'' <= 0, sectional bound      slice
einstein           Einstein warping and fiber           umbilical; slice if c <= 0
=================  ===================================  ==========================

Runs whose spacetime fails the hypothesis are still executed and reported
as controls; their outcome does not enter the verdict.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .cmc_solver import SolverConfig, perturbed_slice, slice_curvature, solve_newton
from .conditions import Spacetime, ncc_margin
from .errors import HypothesisWarning, PreconditionError
from .graph_geometry import geometry
from .identities import C_CAL, CALIBRATION, verify_lemma_1

TAGS = ("umbilical-ncc", "slice-strict-ncc", "pinching", "monotone", "log-concave", "einstein")
VERDICT_FACTOR = 100.0
HYPOTHESIS_TOL = 1e-9


@dataclass(frozen=True)
class ExperimentParams:
    t0: float = 0.0
    c: float | None = None  # prescribed H; None: the slice value f'(t0)/f(t0)
    seeds: tuple = tuple(range(10))
    target_margin: float = 0.45
    modes: int = 4
    l_min: int = 1
    even_only: bool = False
    slab: tuple | None = None  # (a, b); default t0 +- 1 inside the domain
    mode: str | None = None  # solver mode; default per tag
    workers: int = 1


def verdict_tolerance(h: float) -> float:
    """100 * C_CAL * h^2: verdicts are never sharper than the discretization."""
    return VERDICT_FACTOR * C_CAL * h * h


def _slab(st: Spacetime, p: ExperimentParams):
    if p.slab is not None:
        return tuple(float(x) for x in p.slab)
    return st.warping.domain.window(p.t0, 1.0)


def _logpp(f, ts):
    fv, df, ddf = f.derivatives(ts)
    return (ddf * fv - df * df) / (fv * fv)


def check_hypothesis(st: Spacetime, tag: str, p: ExperimentParams, c: float) -> dict:
    """Spacetime-level hypothesis checks for ``tag``; returns {'holds', 'checks'}."""
    if tag not in TAGS:
        raise ValueError(f"unknown experiment tag {tag!r}; expected one of {TAGS}")
    f, fiber = st.warping, st.fiber
    slab = _slab(st, p)
    ts = np.linspace(slab[0], slab[1], 512)
    ncc = ncc_margin(st, slab)
    checks = {"ncc_margin": ncc.margin, "slab": list(slab),
              "fiber_compact_or_parabolic": fiber.is_compact or fiber.universal_cover_parabolic}
    ok = checks["fiber_compact_or_parabolic"]
    if tag == "umbilical-ncc":
        ok &= ncc.verdict
    elif tag == "slice-strict-ncc":
        ok &= ncc.strict_verdict
        checks["strict"] = ncc.strict_verdict
    elif tag == "pinching":
        df = f.derivatives(ts)[1]
        proper = bool(np.max(np.abs(df)) > 0)
        hub0 = slice_curvature(f, p.t0)
        apriori = c * c - hub0 * hub0
        checks.update(proper=proper, pinching_at_t0=apriori)
        ok &= ncc.verdict and proper and apriori >= -HYPOTHESIS_TOL
    elif tag == "monotone":
        df = f.derivatives(ts)[1]
        nonincr, nondecr = bool(np.all(df <= 0)), bool(np.all(df >= 0))
        sign_ok = (nonincr and c >= 0) or (nondecr and c <= 0)
        checks.update(nonincreasing=nonincr, nondecreasing=nondecr, sign_ok=sign_ok)
        ok &= ncc.verdict and sign_ok
    elif tag == "log-concave":
        lpp = float(np.max(_logpp(f, ts)))
        checks.update(max_log_second=lpp, sectional_lower_bound=fiber.sect_lower_bound)
        ok &= lpp <= HYPOTHESIS_TOL and math.isfinite(fiber.sect_lower_bound)
    elif tag == "einstein":
        fam = f.einstein
        matches = fam is not None and abs(fam.c - fiber.ricci_const) <= 1e-12 and fam.n == st.n
        checks.update(einstein_family=None if fam is None else fam.case_id, fiber_matches=matches)
        ok &= matches
    return {"holds": bool(ok), "checks": checks}


def _conclusion_kind(st: Spacetime, tag: str) -> str:
    if tag in ("slice-strict-ncc", "pinching", "log-concave"):
        return "slice"
    if tag == "monotone":
        return "geodesic"
    if tag == "einstein":
        fam = st.warping.einstein
        if fam is not None and fam.c <= 0 and math.isfinite(st.fiber.sect_lower_bound):
            return "slice"
    return "umbilical"


def _solution_hypothesis(st, tag, res) -> dict | None:
    """Checks on the hypersurface itself (pinching only)."""
    if tag != "pinching":
        return None
    u = res.u.values
    fv, df, _ = st.warping.derivatives(u)
    gap = float(np.min(res.c * res.c - (df / fv) ** 2))
    return {"pinching_min": gap, "holds": gap >= -HYPOTHESIS_TOL}


def _run_one(st, tag, p, cfg, c, seed):
    f, grid = st.warping, st.fiber
    u0 = perturbed_slice(f, grid, p.t0, seed, p.target_margin, p.modes, p.l_min, p.even_only)
    res = solve_newton(f, u0, c, replace(cfg, seed=seed))
    row = {"seed": seed, "initial_margin": geometry(f, u0).margin}
    row.update(res.summary())
    row["margin_history_max"] = max(h["margin"] for h in res.history)
    row["solution_hypothesis"] = _solution_hypothesis(st, tag, res)
    if res.converged:
        row["mean_u"] = float(grid.mean(res.u.values))
        row["max_trA2"] = float(np.max(geometry(f, res.u).trA2))
        row["slice_c_gap"] = float(res.c ** 2 - slice_curvature(f, row["mean_u"]) ** 2)
        lo, hi = res.u.range
        if ncc_margin(st, (lo - 1e-6, hi + 1e-6)).verdict:
            try:
                rep = verify_lemma_1(f, res.u)
                row["lemma_lhs_max"] = rep.extras["lhs_max"]
                row["lemma_tolerance"] = CALIBRATION["lemma_1"] * grid.h ** 2
            except PreconditionError as exc:
                row["lemma_error"] = str(exc)
    return row, res


@dataclass
class ExperimentReport:
    tag: str
    label: str  # "test" or "control"
    hypothesis: dict
    conclusion: str
    tolerance: float
    verdict: dict
    runs: list = field(default_factory=list)
    results: list = field(default_factory=list, repr=False)

    def as_dict(self):
        return {"tag": self.tag, "label": self.label, "hypothesis": self.hypothesis,
                "conclusion": self.conclusion, "tolerance": self.tolerance,
                "verdict": self.verdict, "runs": self.runs}


def _conclusion_holds(kind, row, tol):
    if kind == "slice":
        ok = row["slice_distance"] <= tol
        if "slice_c_gap" in row:
            ok = ok and abs(row["slice_c_gap"]) <= tol
        return ok
    if kind == "geodesic":
        return row["max_trA2"] <= tol
    return row["umbilicity_defect"] <= tol


def rigidity_experiment(st: Spacetime, theorem: str, params: ExperimentParams | None = None,
                        cfg: SolverConfig | None = None) -> ExperimentReport:
    """Run the seeded batch for ``theorem`` and compare with its conclusion."""
    p = params or ExperimentParams()
    c = slice_curvature(st.warping, p.t0) if p.c is None else float(p.c)
    hyp = check_hypothesis(st, theorem, p, c)
    label = "test" if hyp["holds"] else "control"
    if not hyp["holds"]:
        warnings.warn(f"{theorem}: spacetime fails the hypothesis; running as a control",
                      HypothesisWarning, stacklevel=2)
    mode = p.mode or ("fixed-c" if theorem in ("pinching", "monotone") or p.c is not None
                      else "slice-anchored")
    cfg = replace(cfg or SolverConfig(), mode=mode)
    if mode == "slice-anchored":
        cfg = replace(cfg, anchor_t=p.t0)
    seeds = list(p.seeds)
    if p.workers > 1:
        with ThreadPoolExecutor(p.workers) as pool:
            out = list(pool.map(lambda s: _run_one(st, theorem, p, cfg, c, s), seeds))
    else:
        out = [_run_one(st, theorem, p, cfg, c, s) for s in seeds]
    rows = [o[0] for o in out]
    results = [o[1] for o in out]
    tol = verdict_tolerance(st.fiber.h)
    kind = _conclusion_kind(st, theorem)
    considered, excluded = [], []
    for row in rows:
        if row["status"] != "converged":
            continue
        sh = row["solution_hypothesis"]
        if sh is not None and not sh["holds"]:
            excluded.append(row["seed"])
            continue
        row["conclusion_holds"] = _conclusion_holds(kind, row, tol)
        considered.append(row)
    n_conv = sum(r["status"] == "converged" for r in rows)
    holds = bool(considered) and all(r["conclusion_holds"] for r in considered)
    verdict = {"applies": label == "test", "holds": holds if considered else None,
               "n_runs": len(rows), "n_converged": n_conv, "n_considered": len(considered),
               "excluded_by_solution_hypothesis": excluded, "c": c}
    return ExperimentReport(theorem, label, hyp, kind, tol, verdict, rows, results)
