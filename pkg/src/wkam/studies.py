"""Study drivers: convergence rates, selection of wells, measure diagnostics.

Every runner takes an :class:`~wkam.config.ExperimentConfig` and returns a
:class:`StudyResult` holding pass/fail checks, tables and plot data.  Nothing
here writes files; see :mod:`wkam.report`.
"""

from __future__ import annotations

import itertools
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from .characteristics import (alpha_limit_invariance, alpha_limit_set, backward_characteristic,
                              backward_characteristics, cluster_points)
from .config import ExperimentConfig
from .errors import DomainError, InconclusiveError, WkamError
from .flows import (cylinder_hit_time, find_stationary_points, hit_time_bound, hyperbolicity_rate,
                    integrate, trace_unstable_manifold, _torus_dist)
from .grid import PeriodicGrid
from .hj_solver import (ActionPrimitive, limit_solution_c1, peierls_barrier_1d,
                        reconstruct_momentum, shock_scan_1d, solve_discounted)
from .measures import (TestFunctionSet, ball_exit_time, discounted_action_identity,
                       holonomy_residual, invariance_probe, occupation_discounted,
                       occupation_uniform, probe_closed_form)
from .model import GOLDEN, critical_c, preset, segment_actions

INV_GOLDEN = GOLDEN - 1.0


@dataclass
class Check:
    name: str
    value: float
    bound: float
    passed: bool

    def as_dict(self):
        return {"name": self.name, "value": _jsonable(self.value),
                "bound": _jsonable(self.bound), "pass": bool(self.passed)}


def _jsonable(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else str(v)


def check_le(name, value, bound):
    return Check(name, float(value), float(bound), bool(value <= bound))


def check_ge(name, value, bound):
    return Check(name, float(value), float(bound), bool(value >= bound))


@dataclass
class StudyResult:
    kind: str
    checks: List[Check] = field(default_factory=list)
    tables: Dict[str, tuple] = field(default_factory=dict)     # name -> (columns, rows)
    plots: Dict[str, dict] = field(default_factory=dict)
    fields: Dict[str, object] = field(default_factory=dict)    # name -> ScalarField
    info: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)


@dataclass
class RateStudyResult(StudyResult):
    rows: list = field(default_factory=list)      # (eps, error, grid, seconds)
    fit: tuple = (math.nan, math.nan, math.nan)   # (slope, intercept, R^2)
    exponent: float = math.nan
    beta: float = math.nan


def _pool_map(fn, items, threads):
    items = list(items)
    if not threads or threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def golden_seeds(count, seed=0):
    """Low-discrepancy points frac(offset + k / golden ratio), k = 0..count-1."""
    offset = np.random.default_rng(seed).random()
    return np.mod(offset + INV_GOLDEN * np.arange(count), 1.0)


# ----------------------------------------------------------------------------
# fits and number-theoretic helpers
# ----------------------------------------------------------------------------

def loglog_fit(eps, values):
    """Least squares line through (log eps, log value); returns (slope, intercept, R^2)."""
    e = np.asarray(eps, float)
    y = np.asarray(values, float)
    keep = (y > 0) & (e > 0) & np.isfinite(y)
    if not keep.all():
        warnings.warn(f"dropping {int((~keep).sum())} nonpositive row(s) from the fit")
    e, y = np.log(e[keep]), np.log(y[keep])
    if e.size < 3:
        raise DomainError("a log-log fit needs at least three positive rows")
    slope, icpt = np.polyfit(e, y, 1)
    resid = y - (slope * e + icpt)
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss if ss > 0 else 1.0
    return float(slope), float(icpt), r2


@dataclass(frozen=True)
class DiophantineSpec:
    omega: tuple
    eta: float = 1.0
    z_max: int = 200


@dataclass(frozen=True)
class DiophantineReport:
    nu: float
    argmin: tuple
    diophantine: bool


def verify_diophantine(spec: DiophantineSpec) -> DiophantineReport:
    """Exhaustive min of |omega.z| |z|_1^eta over integer z with 0 < |z|_1 <= z_max."""
    w = np.asarray(spec.omega, float)
    n = w.size
    if spec.z_max < 50:
        raise DomainError("search bound must be at least 50")
    if n > 2:
        raise DomainError("exhaustive search is implemented for n <= 2")
    R = int(spec.z_max)
    if n == 1:
        z = np.arange(1, R + 1, dtype=float)[:, None]
    else:
        a, b = np.meshgrid(np.arange(-R, R + 1), np.arange(-R, R + 1), indexing="ij")
        z = np.stack([a.ravel(), b.ravel()], axis=1).astype(float)
        l1 = np.abs(z).sum(axis=1)
        z = z[(l1 > 0) & (l1 <= R)]
    vals = np.abs(z @ w) * np.abs(z).sum(axis=1) ** spec.eta
    k = int(np.argmin(vals))
    nu = float(vals[k])
    return DiophantineReport(nu, tuple(int(v) for v in z[k]), nu > 1e-6)


def ergodic_cover_time(omega, delta, t_max=1e5):
    """First time the linear orbit omega*s mod 1 hits every cell of a (2/delta)^n cover.

    The orbit is sampled with step delta / (4 |omega|); cells have side 1/ceil(2/delta),
    so every point of the torus then lies within delta of a sample.
    """
    if not 1e-3 <= delta <= 0.2:
        raise DomainError("delta must lie in [1e-3, 0.2]")
    w = np.atleast_1d(np.asarray(omega, float))
    n = w.size
    m = int(math.ceil(2.0 / delta))
    step = delta / (4.0 * float(np.linalg.norm(w)))
    seen = np.zeros(m ** n, dtype=bool)
    left = seen.size
    chunk = 1 << 16
    k0 = 0
    strides = m ** np.arange(n)
    while k0 * step <= t_max:
        s = (k0 + np.arange(chunk)) * step
        cells = (np.floor(np.mod(np.outer(s, w), 1.0) * m).astype(np.int64) % m) @ strides
        new = ~seen[cells]
        if new.any():
            idx = np.flatnonzero(new)
            cid, first = np.unique(cells[idx], return_index=True)
            seen[cid] = True
            left -= cid.size
            if left == 0:
                return float(s[idx[first].max()])
        k0 += chunk
    return math.inf


# ----------------------------------------------------------------------------
# rate studies
# ----------------------------------------------------------------------------

def _grid(cfg: ExperimentConfig):
    return PeriodicGrid.uniform(cfg.N, cfg.dim)


def run_rate_study_c1(cfg: ExperimentConfig, backend=None) -> RateStudyResult:
    """Sup-norm distance of the discounted solution to the vanishing-discount limit, per eps."""
    model = preset(cfg.preset)
    if model.kind != "mechanical1d":
        raise DomainError("the C1 rate study needs a mechanical preset")
    c = cfg.c[0]
    grid = _grid(cfg)
    scfg = cfg.solver()
    G = ActionPrimitive(model)
    limit = limit_solution_c1(model, c, grid, G).values

    def row(eps):
        t0 = time.perf_counter()
        try:
            f, _, _ = solve_discounted(model, c, eps, 0.0, grid, scfg, backend=backend)
        except WkamError as exc:
            return (eps, math.nan, cfg.N, time.perf_counter() - t0, str(exc))
        err = float(np.max(np.abs(f.values - limit)))
        return (eps, err, cfg.N, time.perf_counter() - t0, "")

    rows = _pool_map(row, cfg.eps_list, cfg.threads)
    res = RateStudyResult("rate-c1", rows=rows)
    res.tables["rate_c1"] = (("epsilon", "sup_error", "grid_n", "seconds"),
                             [r[:4] for r in rows])
    errs = np.array([r[1] for r in rows])
    failed = [r for r in rows if r[4]]
    res.checks.append(check_le("failed_rows", len(failed), 0))
    ok = np.isfinite(errs)
    if ok.sum() >= 3:
        res.fit = loglog_fit([r[0] for r in rows], errs)
        res.checks.append(check_ge("slope", res.fit[0], 0.8))
        res.checks.append(check_ge("r_squared", res.fit[2], 0.98))
    else:
        res.checks.append(Check("slope", math.nan, 0.8, False))
    res.checks.append(Check("strictly_decreasing", float(np.all(np.diff(errs) < 0)), 1.0,
                            bool(np.all(np.diff(errs) < 0))))
    res.plots["rate_c1"] = {"eps": [r[0] for r in rows], "error": errs.tolist(), "fit": res.fit,
                            "title": f"{model.name}, c = {c:g}"}
    res.info.update(model=model.name, c=c, failures=[r[4] for r in failed])
    return res


def _kam_error(field_values, exact):
    d = field_values - (exact - exact.mean())
    return 0.5 * float(d.max() - d.min())


def run_rate_study_c2(cfg: ExperimentConfig, backend=None) -> RateStudyResult:
    """Distance of the discounted solution to the KAM solution, modulo constants, per eps."""
    model = preset(cfg.preset)
    if model.kind != "quadraticKam":
        raise DomainError("the C2 rate study needs a quadratic KAM preset")
    grid = _grid(cfg)
    scfg = cfg.solver()
    exact = model.exact_solution(grid.points())
    c = model.offset

    def row(eps):
        t0 = time.perf_counter()
        try:
            f, _, _ = solve_discounted(model, c, eps, 0.0, grid, scfg, backend=backend)
        except WkamError as exc:
            return (eps, math.nan, cfg.N, time.perf_counter() - t0, str(exc))
        return (eps, _kam_error(f.values, exact), cfg.N, time.perf_counter() - t0, "")

    rows = _pool_map(row, cfg.eps_list, cfg.threads)
    expo = 1.0 / (1.0 + 2.0 * cfg.eta)
    res = RateStudyResult("rate-c2", rows=rows, exponent=expo)
    res.tables["rate_c2"] = (("epsilon", "sup_error", "grid_n", "seconds"),
                             [r[:4] for r in rows])
    errs = np.array([r[1] for r in rows])
    eps = np.array([r[0] for r in rows])
    dio = verify_diophantine(DiophantineSpec(tuple(model.omega), cfg.eta, cfg.z_max))
    res.checks.append(check_ge("diophantine_nu", dio.nu, 0.2 if model.n > 1 else 1e-6))
    res.checks.append(check_le("failed_rows", sum(1 for r in rows if r[4]), 0))
    scale = float(np.max(np.abs(exact))) if exact.size else 0.0
    if scale == 0.0:
        # exact solution is constant: errors are pure solver tolerance
        res.checks.append(check_le("max_error", float(np.nanmax(errs)), 10 * cfg.tol))
    else:
        ratios = errs / eps ** expo
        res.beta = 1.5 * float(ratios[0])
        for e, r in zip(eps, errs):
            res.checks.append(check_le(f"bound_eps_{e:g}", r, res.beta * e ** expo))
    try:
        res.fit = loglog_fit(eps, errs)
    except DomainError:
        pass
    res.plots["rate_c2"] = {"eps": eps.tolist(), "error": errs.tolist(), "fit": res.fit,
                            "bound": None if math.isnan(res.beta) else [res.beta, expo],
                            "title": model.name}
    res.info.update(model=model.name, nu=dio.nu, nu_argmin=dio.argmin)
    return res


# ----------------------------------------------------------------------------
# alpha-limit surveys and selection
# ----------------------------------------------------------------------------

@dataclass
class SurveyRow:
    c: float
    eps: float
    clusters: np.ndarray        # (k, 2) aggregated cluster centers
    seeds_hit: np.ndarray       # seeds with an alpha-limit point in each cluster
    wells: list                 # zero of F nearest each cluster
    stationary: list            # (shifted equilibrium x, value there / eps)
    seed_points: list           # per seed: AlphaLimitSet or None
    inconclusive: int
    dx: float


def alpha_survey(model, c, eps, grid, scfg, seeds, T, ds, resync, backend=None) -> SurveyRow:
    f, _, _ = solve_discounted(model, c, eps, 0.0, grid, scfg, backend=backend)
    mf = reconstruct_momentum(f, model, c, eps, 0.0, scfg, backend=backend)
    record = 10 if resync % 10 == 0 else 1
    trajs = backward_characteristics(mf, model, c, eps, seeds, T, ds, resync_every=resync,
                                     record_every=record, backend=backend)
    per_seed, pts, owner = [], [], []
    bad = 0
    for i, tr in enumerate(trajs):
        try:
            a = alpha_limit_set(tr)
        except InconclusiveError:
            per_seed.append(None)
            bad += 1
            continue
        per_seed.append(a)
        for z in a.points:
            pts.append(z)
            owner.append(i)
    zeros = segment_actions(model).zeros
    if pts:
        pts = np.array(pts)
        centers, _, _ = cluster_points(pts, 1e-2, 1)
        hits = []
        for cen in centers:
            d = np.hypot(_torus_dist(pts[:, 0], cen[0]), pts[:, 1] - cen[1])
            hits.append(len({owner[j] for j in np.flatnonzero(d <= 1e-2)}))
        order = np.argsort(centers[:, 0], kind="stable")
        centers, hits = centers[order], np.array(hits)[order]
    else:
        centers, hits = np.zeros((0, 2)), np.zeros(0, int)
    wells = [float(zeros[int(np.argmin(_torus_dist(zeros, cx)))]) for cx in centers[:, 0]]
    stat = [(sp.x, float(f([sp.x])[0]) / eps) for sp in find_stationary_points(model, c, eps)]
    return SurveyRow(float(c), float(eps), centers, hits, wells, stat, per_seed, bad, grid.hmax)


def _survey_all(cfg, model, backend):
    grid = _grid(cfg)
    scfg = cfg.solver()
    seeds = golden_seeds(cfg.seeds, cfg.seed)
    jobs = list(itertools.product(cfg.c, cfg.eps_list))
    return _pool_map(lambda job: alpha_survey(model, job[0], job[1], grid, scfg, seeds, cfg.T,
                                              cfg.ds, cfg.resync, backend), jobs, cfg.threads)


def predicted_wells(model, c, tol=1e-9):
    """Zeros of F where the vanishing-discount limit vanishes."""
    G = ActionPrimitive(model)
    zeros = G.zeros
    out = []
    for z in zeros:
        v = min(float(peierls_barrier_1d(model, c, z, zi, G)) for zi in zeros)
        if v >= -tol:
            out.append(float(z))
    return out


def _survey_table(rows):
    out = []
    for r in rows:
        for k, cen in enumerate(r.clusters):
            n = len(r.seed_points)
            out.append((r.c, r.eps, float(cen[0]), float(cen[1]), r.seeds_hit[k] / n,
                        int(r.seeds_hit[k])))
    return (("c", "epsilon", "cluster_x", "cluster_p", "mass", "seeds_hit"), out)


def alpha_limit_checks(model, rows: List[SurveyRow], tol):
    """Cluster momentum, cluster position and stability of value / eps at the selected wells."""
    checks = []
    fxx_min = min(float(model.F.hess(np.array([z]))[0, 0, 0]) for z in segment_actions(model).zeros)
    by_c = {}
    for r in rows:
        by_c.setdefault(r.c, []).append(r)
    for c, rs in by_c.items():
        rs = sorted(rs, key=lambda r: -r.eps)
        hit = sorted({w for r in rs for w in r.wells})
        # value / eps at the stationary point of each selected well, per eps
        ratios = {}
        for r in rs:
            for x, q in r.stationary:
                zeros = np.array(hit)
                if zeros.size and _torus_dist(zeros, x).min() < 0.05:
                    w = float(zeros[int(np.argmin(_torus_dist(zeros, x)))])
                    ratios.setdefault(w, []).append((r.eps, q))
        beta = max([abs(q) for v in ratios.values() for _, q in v] + [0.0])
        for r in rs:
            pmax = float(np.max(np.abs(r.clusters[:, 1]))) if len(r.clusters) else math.inf
            checks.append(check_le(f"cluster_p[c={c:g},eps={r.eps:g}]", pmax,
                                   2 * (r.dx + beta * r.eps)))
            if len(r.clusters):
                dist = max(float(_torus_dist(w, x)) for w, x in zip(r.wells, r.clusters[:, 0]))
            else:
                dist = math.inf
            checks.append(check_le(f"cluster_x[c={c:g},eps={r.eps:g}]", dist,
                                   1e-3 + 2 * abs(c) * r.eps / fxx_min))
        for w, seq in ratios.items():
            worst = 1.0
            for (e1, q1), (e2, q2) in zip(seq, seq[1:]):
                a, b = abs(q1), abs(q2)
                if max(a * e1, b * e2) <= 10 * tol:
                    continue            # the value vanishes to solver precision at this well
                worst = max(worst, max(a, b) / min(a, b) if min(a, b) > 0 else math.inf)
            checks.append(Check(f"ratio_spread[c={c:g},well={w:g}]", worst, 2.0, worst < 2.0))
    return checks


def run_alpha_study(cfg: ExperimentConfig, backend=None) -> StudyResult:
    model = preset(cfg.preset)
    rows = _survey_all(cfg, model, backend)
    res = StudyResult("alpha")
    res.tables["alpha"] = _survey_table(rows)
    res.checks += alpha_limit_checks(model, rows, cfg.tol)
    for r in rows:
        # short horizon: clusters sit next to saddles, so errors grow like exp(rate * T)
        inv = max([alpha_limit_invariance(a, model, r.c, r.eps, T=0.1, ds=1e-3, backend=backend)
                   for a in r.seed_points[:5] if a is not None] + [0.0])
        res.checks.append(check_le(f"invariance[c={r.c:g},eps={r.eps:g}]", inv, 1e-2))
    res.info["rows"] = rows
    return res


def run_selection_study(cfg: ExperimentConfig, backend=None) -> StudyResult:
    """Which wells carry alpha-limit points, against the vanishing-discount prediction."""
    model = preset(cfg.preset)
    if model.kind != "mechanical1d" or len(segment_actions(model).zeros) < 2:
        raise DomainError("the selection study needs a mechanical model with several wells")
    rows = _survey_all(cfg, model, backend)
    res = StudyResult("selection")
    res.tables["selection"] = _survey_table(rows)
    res.tables["selection_ratios"] = (
        ("c", "epsilon", "x_stationary", "v_over_eps"),
        [(r.c, r.eps, x, q) for r in rows for x, q in r.stationary])
    sa = segment_actions(model)
    res.info["segment_actions"] = sa.actions.tolist()
    for r in rows:
        want = predicted_wells(model, r.c)
        got = sorted(set(r.wells))
        ok = len(got) == len(want) and all(abs(a - b) < 1e-9 for a, b in zip(got, want))
        res.checks.append(Check(f"wells[c={r.c:g},eps={r.eps:g}]", float(len(got)),
                                float(len(want)), ok))
        res.checks.append(check_le(f"inconclusive[c={r.c:g},eps={r.eps:g}]", r.inconclusive, 0))
    res.info["rows"] = rows
    return res


# ----------------------------------------------------------------------------
# single-purpose studies for the command line
# ----------------------------------------------------------------------------

def _trivial_solution(model):
    if model.kind == "quadraticKam":
        return not (np.any(model.u.cos_coefs) or np.any(model.u.sin_coefs))
    return model.kind == "mechanical1d" and not np.any(model.F.value(np.linspace(0, 1, 64)))


def run_solve_study(cfg: ExperimentConfig, backend=None) -> StudyResult:
    model = preset(cfg.preset)
    grid = _grid(cfg)
    scfg = cfg.solver()
    res = StudyResult("solve")
    rows = []
    for c, eps in itertools.product(cfg.c, cfg.eps_list):
        cc = model.offset if model.kind == "quadraticKam" else c
        f, sweeps, resid = solve_discounted(model, cc, eps, 0.0, grid, scfg, backend=backend)
        mf = reconstruct_momentum(f, model, cc, eps, 0.0, scfg, backend=backend)
        tag = f"c{c:g}_eps{eps:g}"
        res.fields[f"field_{tag}"] = f
        nshock = int(mf.shock.sum())
        rows.append((c, eps, sweeps, resid, float(np.ptp(f.values)), nshock, f.meta["seconds"]))
        res.checks.append(check_le(f"residual[{tag}]", resid, scfg.tol * (1 - math.exp(-eps * f.meta["dt"]))))
        if _trivial_solution(model):
            res.checks.append(check_le(f"exact[{tag}]", float(np.max(np.abs(f.values))), 10 * scfg.tol))
        if grid.n == 1:
            plot = {"x": grid.points()[:, 0].tolist(), "v": f.values.tolist(),
                    "p": mf.momentum[:, 0].tolist(), "title": f"{model.name}, {tag}"}
            if model.kind == "mechanical1d":
                plot["separatrix"] = np.sqrt(2 * np.maximum(model.F.value(grid.points()), 0)).tolist()
            res.plots[f"profile_{tag}"] = plot
    res.tables["solve"] = (("c", "epsilon", "sweeps", "residual", "oscillation", "shock_nodes",
                            "seconds"), rows)
    return res


def run_flow_study(cfg: ExperimentConfig, backend=None) -> StudyResult:
    """Stationary points, unstable manifolds and cylinder hit times along the separatrix."""
    model = preset(cfg.preset)
    if model.kind != "mechanical1d":
        raise DomainError("the flow study needs a mechanical preset")
    res = StudyResult("flow")
    zeros = segment_actions(model).zeros
    rows, hits = [], []
    for c, eps in itertools.product(cfg.c, cfg.eps_list):
        sps = find_stationary_points(model, c, eps)
        curves = []
        for sp in sps:
            for side in ("right", "left"):
                tr = trace_unstable_manifold(sp, model, c, eps, side=side, backend=backend)
                curves.append((tr.x[:, 0].tolist(), tr.p[:, 0].tolist()))
                rows.append((c, eps, sp.x, side, sp.lam_plus, tr.info["arc"], tr.info["stop"]))
        res.plots[f"phase_c{c:g}_eps{eps:g}"] = {"curves": curves, "points": [sp.x for sp in sps],
                                                "title": f"{model.name}, c = {c:g}, eps = {eps:g}"}
    # backward from the top of each separatrix arc to the cylinder around a zero
    gaps = np.diff(np.append(zeros, zeros[0] + 1.0))
    for z, g in zip(zeros, gaps):
        mid = z + 0.5 * g
        p0 = math.sqrt(2 * max(float(model.F.value(np.array([mid]))[0]), 0.0))
        b = hyperbolicity_rate(model, z)
        span = -(hit_time_bound(b, 1e-3) + 1.0)
        tr = integrate(model, 0.0, 0.0, (mid, p0), span, 1e-4, backend=backend)
        for delta in (1e-1, 1e-2, 1e-3):
            ht = cylinder_hit_time(tr, [z], delta)
            t = math.inf if ht is None else ht[0]
            bound = hit_time_bound(b, delta) + 0.1
            hits.append((float(z), delta, t, bound))
            res.checks.append(check_le(f"hit_time[zero={z:g},delta={delta:g}]", t, bound))
    res.tables["flow"] = (("c", "epsilon", "x_stationary", "side", "rate", "arc", "stop"), rows)
    res.tables["hit_times"] = (("zero", "delta", "hit_time", "bound"), hits)
    w = np.array([1.0, GOLDEN])
    deltas = [0.2, 0.1, 0.05, 0.025, 0.0125]
    cover = [ergodic_cover_time(w, d) for d in deltas]
    slope = loglog_fit(1.0 / np.array(deltas), cover)[0]
    res.tables["cover_time"] = (("delta", "cover_time"), list(zip(deltas, cover)))
    res.checks.append(check_le("cover_slope", slope, cfg.eta + 0.2))
    return res


def probe_at_shock(model, c, eps, mfield, delta=0.02, tau=1.0, T=5.0, ds=1e-4, backend=None):
    """Invariance probe for the discounted measure of a free orbit started next to a shock.

    The closed-form masses assume the orbit meets the ball once, so the orbit
    is cut just before any return to the ball.  Returns (measured masses,
    closed-form masses, (tau_minus, tau_plus), horizon used).
    """
    shocks = shock_scan_1d(mfield)
    if not shocks:
        raise DomainError("the field has no shock")
    x0 = shocks[0][0] - 3 * mfield.grid.hmax
    tr = backward_characteristic(mfield, model, c, eps, [x0], T, ds, backend=backend)
    xi = tr.velocity(model)
    dx = np.mod(tr.x[:, 0] - tr.x[0, 0] + 0.5, 1.0) - 0.5
    dist = np.hypot(dx, xi[:, 0] - xi[0, 0])
    out = np.flatnonzero(dist >= delta)
    if out.size:
        back = np.flatnonzero(dist[out[0]:] < delta)
        if back.size:
            k = out[0] + back[0]
            if abs(tr.s[k - 1]) <= tau + 2 * delta:
                raise DomainError("orbit returns to the ball before the probe horizon")
            tr = tr.truncate(k)
    mu = occupation_discounted(tr, model, eps)
    center = np.hstack([np.mod(mu.x[0], 1.0), mu.xi[0]])
    measured = invariance_probe(mu, model, c, eps, tau, (center, delta), backend=backend)
    start = (mu.x[0], mu.p[0])
    t_minus = ball_exit_time(model, c, eps, start, delta, "backward", backend=backend)
    t_plus = ball_exit_time(model, c, eps, start, delta, "forward", backend=backend)
    closed = probe_closed_form(eps, tau, t_minus, t_plus, mu.T)
    return measured, closed, (t_minus, t_plus), mu.T


def run_measure_study(cfg: ExperimentConfig, backend=None) -> StudyResult:
    model = preset(cfg.preset)
    grid = _grid(cfg)
    scfg = cfg.solver()
    tests = TestFunctionSet(model.n, 3)
    res = StudyResult("measure")
    rows = []
    seeds = golden_seeds(1, cfg.seed)
    for c, eps in itertools.product(cfg.c, cfg.eps_list):
        tag = f"c={c:g},eps={eps:g}"
        f, _, _ = solve_discounted(model, c, eps, 0.0, grid, scfg, backend=backend)
        mf = reconstruct_momentum(f, model, c, eps, 0.0, scfg, backend=backend)
        T = 20.0 / eps
        tr = backward_characteristic(mf, model, c, eps, seeds, T, cfg.ds, resync_every=cfg.resync,
                                     backend=backend)
        mu = occupation_discounted(tr, model, eps)
        act = discounted_action_identity(mu, model, c, 0.0, f)
        uni = occupation_uniform(tr, model)
        hol = holonomy_residual(uni, tests)
        res.checks.append(check_le(f"action_identity[{tag}]", act, 1e-3))
        res.checks.append(check_le(f"uniform_holonomy[{tag}]", hol, 2.0 / uni.T))
        row = [c, eps, act, hol, 2.0 / uni.T]
        if model.kind == "mechanical1d" and shock_scan_1d(mf):
            (mb, mp), (cb, cp), _, _ = probe_at_shock(model, c, eps, mf, backend=backend)
            rel = abs((mp - mb) - (cp - cb)) / abs(cp - cb)
            res.checks.append(check_le(f"probe_mismatch[{tag}]", rel, 0.1))
            row += [mb, mp, cb, cp]
        else:
            row += [math.nan] * 4
        rows.append(tuple(row))
    res.tables["measure"] = (("c", "epsilon", "action_identity", "uniform_holonomy",
                              "holonomy_bound", "mass_ball", "mass_preimage",
                              "closed_ball", "closed_preimage"), rows)
    return res


def run_barrier_study(cfg: ExperimentConfig, backend=None) -> StudyResult:
    model = preset(cfg.preset)
    if model.kind != "mechanical1d":
        raise DomainError("the barrier study needs a mechanical preset")
    res = StudyResult("barrier")
    G = ActionPrimitive(model)
    zeros = G.zeros
    cm, cp = critical_c(model)
    sa = segment_actions(model)
    res.info.update(c_minus=cm, c_plus=cp, actions=sa.actions.tolist())
    rows = []
    rng = np.random.default_rng(cfg.seed)
    for c in cfg.c:
        for zi in zeros:
            for zj in zeros:
                rows.append((c, float(zi), float(zj), float(peierls_barrier_1d(model, c, zi, zj, G))))
        diag = max(abs(float(peierls_barrier_1d(model, c, z, z, G))) for z in zeros)
        res.checks.append(check_le(f"diagonal[c={c:g}]", diag, 1e-12))
        x, y, z = rng.random((3, 256))
        tri = peierls_barrier_1d(model, c, x, z, G) - peierls_barrier_1d(model, c, x, y, G) \
            - peierls_barrier_1d(model, c, y, z, G)
        res.checks.append(check_le(f"triangle[c={c:g}]", float(np.max(tri)), 1e-10))
        lim = limit_solution_c1(model, c, _grid(cfg), G)
        res.checks.append(check_le(f"limit_max_at_zeros[c={c:g}]",
                                   max(float(lim([z])[0]) for z in zeros), 1e-9))
    res.tables["barrier"] = (("c", "x", "y", "barrier"), rows)
    return res


RUNNERS = {
    "solve": run_solve_study,
    "flow": run_flow_study,
    "alpha": run_alpha_study,
    "measure": run_measure_study,
    "rate-c1": run_rate_study_c1,
    "rate-c2": run_rate_study_c2,
    "selection": run_selection_study,
    "barrier": run_barrier_study,
}


def run_study(cfg: ExperimentConfig, backend=None) -> StudyResult:
    return RUNNERS[cfg.kind](cfg, backend=backend)
