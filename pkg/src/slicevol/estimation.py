"""Maximum-likelihood fitting of the eight model parameters.

Stages, in order:

1. classify the ``2M`` edges (both ends of every heart) into no-jump, jump-up
   and jump-down, and set the jump probabilities to their observed frequencies;
2. fit each gamma rate ``beta_u0``, ``beta_u1``, ``beta_n`` on its own edges;
3. fit ``(theta0, alpha)`` on the approximate transition likelihood of the
   inner slices ``j = 3 .. N-2``;
4. calibrate the bridge length ``delta`` on slice 2 given the SDE parameters.

All optimisation is Nelder-Mead on log-parameters.
"""
import dataclasses
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from . import moment_match as mm
from .errors import (
    DegenerateParamsError,
    DomainError,
    EmptyCaseError,
    InadmissibleEdgeError,
    SchemaError,
    SlicevolError,
)
from .formats import FORMAT_VERSION, check_version
from .jump_model import JumpParams, gamma_logpdf, jump_log_density
from .rng import stream
from .sde_core import SdeParams
from .slice_data import reverse

log = logging.getLogger(__name__)

DELTA_MAX = 5.0
DELTA_MIN = 1e-4


@dataclass(frozen=True)
class ModelParams:
    sde: SdeParams
    jump: JumpParams
    delta: float

    def __post_init__(self):
        d = float(self.delta)
        if not (0 < d <= DELTA_MAX):
            raise DomainError(f"delta must lie in (0, {DELTA_MAX}], got {d}")
        object.__setattr__(self, "delta", d)

    def as_dict(self):
        return {
            "theta0": self.sde.theta0,
            "alpha": self.sde.alpha,
            "delta": self.delta,
            "lambda_u": self.jump.lambda_u,
            "lambda_d": self.jump.lambda_d,
            "beta_u0": self.jump.beta_u0,
            "beta_u1": self.jump.beta_u1,
            "beta_n": self.jump.beta_n,
        }

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(
                SdeParams(d["theta0"], d["alpha"]),
                JumpParams(d["lambda_u"], d["lambda_d"], d.get("beta_u0"), d.get("beta_u1"), d.get("beta_n")),
                d["delta"],
            )
        except KeyError as exc:
            raise SchemaError(f"parameter {exc.args[0]!r} missing") from None


@dataclass
class FitConfig:
    xatol: float = 1e-4
    fatol: float = 1e-6
    maxiter: int = 500
    delta_max: float = DELTA_MAX
    beta_bounds: tuple = (1e-9, 1e4)
    sde_bounds: tuple = ((1e-4, 1e3), (1e-4, 1e6))  # (theta0, alpha)
    sde_init: Optional[tuple] = None  # (theta0, alpha); method-of-moments if None


@dataclass
class StageInfo:
    iters: int = 0
    converged: bool = True
    objective: Optional[float] = None
    note: str = ""


@dataclass
class FitReport:
    theta0: Optional[float] = None
    alpha: Optional[float] = None
    delta: Optional[float] = None
    lambda_u: Optional[float] = None
    lambda_d: Optional[float] = None
    beta_u0: Optional[float] = None
    beta_u1: Optional[float] = None
    beta_n: Optional[float] = None
    loglik_jump: Optional[float] = None
    loglik_sde: Optional[float] = None
    loglik_delta: Optional[float] = None
    counts: dict = field(default_factory=dict)
    stages: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)
    variance_floored: int = 0
    config: dict = field(default_factory=dict)

    @property
    def loglik_total(self):
        parts = (self.loglik_jump, self.loglik_sde, self.loglik_delta)
        return None if any(v is None for v in parts) else float(sum(parts))

    @property
    def converged(self):
        return all(s.converged for s in self.stages.values())

    @property
    def complete(self):
        return not self.errors and None not in (self.theta0, self.alpha, self.delta, self.lambda_u, self.lambda_d)

    @property
    def params(self):
        if not self.complete:
            raise SlicevolError("fit is incomplete: " + "; ".join(self.errors or ["missing parameters"]))
        return ModelParams(
            SdeParams(self.theta0, self.alpha),
            JumpParams(self.lambda_u, self.lambda_d, self.beta_u0, self.beta_u1, self.beta_n),
            self.delta,
        )

    def to_dict(self):
        return {
            "format_version": FORMAT_VERSION,
            "params": {
                "theta0": self.theta0,
                "alpha": self.alpha,
                "delta": self.delta,
                "lambda_u": self.lambda_u,
                "lambda_d": self.lambda_d,
                "beta_u0": self.beta_u0,
                "beta_u1": self.beta_u1,
                "beta_n": self.beta_n,
            },
            "loglik": {
                "jump": self.loglik_jump,
                "sde": self.loglik_sde,
                "delta": self.loglik_delta,
                "total": self.loglik_total,
            },
            "counts": self.counts,
            "stages": {k: asdict(v) for k, v in self.stages.items()},
            "converged": self.converged,
            "errors": list(self.errors),
            "variance_floored": self.variance_floored,
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, d):
        check_version(d.get("format_version"), "fit report")
        if "params" not in d:
            raise SchemaError("fit report has no 'params' section")
        p = d["params"]
        ll = d.get("loglik", {})
        return cls(
            **{k: p.get(k) for k in ("theta0", "alpha", "delta", "lambda_u", "lambda_d", "beta_u0", "beta_u1", "beta_n")},
            loglik_jump=ll.get("jump"),
            loglik_sde=ll.get("sde"),
            loglik_delta=ll.get("delta"),
            counts=d.get("counts", {}),
            stages={k: StageInfo(**v) for k, v in d.get("stages", {}).items()},
            errors=list(d.get("errors", [])),
            variance_floored=d.get("variance_floored", 0),
            config=d.get("config", {}),
        )


# ------------------------------------------------------------------ edges and jumps


@dataclass(frozen=True)
class Edges:
    """The ``2M`` edge observations; the second end of each heart is re-indexed as its own edge."""

    g0: np.ndarray
    g1: np.ndarray
    p1: np.ndarray
    case: np.ndarray  # 0 no jump, 1 jump up, 2 jump down

    @property
    def I_n(self):
        return np.flatnonzero(self.case == 0)

    @property
    def I_u(self):
        return np.flatnonzero(self.case == 1)

    @property
    def I_d(self):
        return np.flatnonzero(self.case == 2)

    def counts(self):
        return {
            "n": int(np.sum(self.case == 0)),
            "u": int(np.sum(self.case == 1)),
            "d": int(np.sum(self.case == 2)),
            "edges": int(self.case.size),
        }


def _require_truth(dataset):
    for s in dataset:
        if s.g is None:
            raise SchemaError(f"{s.id}: ground truth (truth_area_mm2) is required for fitting")


def classify_edges(dataset):
    _require_truth(dataset)
    g0, g1, p1 = [], [], []
    for s in dataset:
        g0 += [s.g[0], s.g[-1]]
        g1 += [s.g[1], s.g[-2]]
        p1 += [s.p[1], s.p[-2]]
    g0, g1, p1 = np.array(g0), np.array(g1), np.array(p1)
    bad = (g0 > 0) & (g1 == 0)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise InadmissibleEdgeError(f"{dataset[i // 2].id}: edge with g0 > 0 and g1 = 0")
    case = np.where(g1 == 0, 2, np.where(g0 > 0, 1, 0))
    return Edges(g0, g1, p1, case)


def fit_lambdas(n_u, n_d, n_edges):
    """Closed-form MLE: the jump probabilities equal the observed frequencies."""
    if n_edges <= 0:
        raise DomainError("need at least one edge")
    return n_u / n_edges, n_d / n_edges


def lambda_objective(lambda_u, lambda_d, n_u, n_d, n_edges):
    """Log of ``lambda_d^|I_d| lambda_u^|I_u| (1 - lambda_u - lambda_d)^rest``."""
    rest = n_edges - n_u - n_d
    lam_n = 1.0 - lambda_u - lambda_d
    terms = [(n_d, lambda_d), (n_u, lambda_u), (rest, lam_n)]
    total = 0.0
    for n, lam in terms:
        if n == 0:
            continue
        if lam <= 0:
            return -math.inf
        total += n * math.log(lam)
    return total


def _minimize_log(fun, x0, step, bounds, config):
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    x0 = np.clip(x0, lo, hi)
    simplex = [x0.copy()]
    for i in range(x0.size):
        v = x0.copy()
        v[i] = v[i] + step if v[i] + step <= hi[i] else v[i] - step
        simplex.append(v)

    def safe(x):
        with np.errstate(all="ignore"):
            val = fun(x)
        return val if math.isfinite(val) else 1e300

    res = minimize(
        safe,
        x0,
        method="Nelder-Mead",
        bounds=list(zip(lo, hi)),
        options={
            "xatol": config.xatol,
            "fatol": config.fatol,
            "maxiter": config.maxiter,
            "initial_simplex": np.array(simplex),
        },
    )
    return res


def _gamma_mean_tied_nll(beta, x, mu):
    return -float(np.sum(gamma_logpdf(x, mu * beta, beta)))


def fit_gamma_rate(x, mu, config=None):
    """MLE of a common rate ``beta`` for ``x_i ~ Gamma(shape = mu_i beta, rate = beta)``.

    Returns ``(beta, StageInfo)``. Hitting a bound marks the stage unconverged.
    """
    config = config or FitConfig()
    x = np.asarray(x, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if x.size == 0:
        raise EmptyCaseError("no observations")
    lo, hi = math.log(config.beta_bounds[0]), math.log(config.beta_bounds[1])
    resid = float(np.sum((x - mu) ** 2 / mu))
    beta0 = x.size / resid if resid > 0 else config.beta_bounds[1]
    res = _minimize_log(lambda z: _gamma_mean_tied_nll(math.exp(z[0]), x, mu), [math.log(beta0)], 0.5, [(lo, hi)], config)
    z = float(res.x[0])
    at_bound = z >= hi - 10 * config.xatol or z <= lo + 10 * config.xatol
    info = StageInfo(int(res.nit), bool(res.success) and not at_bound, float(res.fun))
    if at_bound:
        info.note = "rate estimate at its bound"
    return math.exp(z), info


def fit_jump_betas(edges, lambda_u, lambda_d, config=None):
    """Fit ``beta_u0``, ``beta_u1``, ``beta_n`` separately; absent cases give ``None``."""
    config = config or FitConfig()
    out = {}
    up, no = edges.I_u, edges.I_n
    jobs = {
        "beta_n": (edges.g1[no], edges.p1[no]),
        "beta_u1": (edges.g1[up], edges.p1[up]),
    }
    if lambda_u > 0 and lambda_d > 0:
        jobs["beta_u0"] = (edges.g0[up], lambda_d / lambda_u * edges.p1[up])
    else:
        jobs["beta_u0"] = (np.empty(0), np.empty(0))
    for name in ("beta_u0", "beta_u1", "beta_n"):
        x, mu = jobs[name]
        if x.size == 0:
            note = "no observations for this case"
            if name == "beta_u0" and up.size > 0:
                note = "jump-up edges present but no jump-down edges: x0 mean is zero"
            out[name] = (None, StageInfo(0, True, None, note))
            continue
        out[name] = fit_gamma_rate(x, mu, config)
    return out


def jump_loglik(edges, jump):
    return float(sum(jump_log_density(a, b, c, jump) for a, b, c in zip(edges.g0, edges.g1, edges.p1)))


# ------------------------------------------------------------------ SDE likelihood


@dataclass(frozen=True)
class Transitions:
    """Inner-slice transitions ``j-1 -> j`` for ``j = 3 .. N-2`` of every heart."""

    v_start: np.ndarray
    p_start: np.ndarray
    p_end: np.ndarray
    g_end: np.ndarray
    heart: np.ndarray

    @classmethod
    def from_dataset(cls, dataset):
        _require_truth(dataset)
        cols = [[], [], [], [], []]
        for h, s in enumerate(dataset):
            n = s.N
            for j in range(3, n - 1):
                if s.g[j] <= 0 or s.g[j - 1] <= 0:
                    raise SchemaError(f"{s.id}: ground truth must be > 0 on slices 2..N-2")
                cols[0].append(s.g[j - 1] - s.p[j - 1])
                cols[1].append(s.p[j - 1])
                cols[2].append(s.p[j])
                cols[3].append(s.g[j])
                cols[4].append(h)
        return cls(*(np.array(c, dtype=float) for c in cols[:4]), np.array(cols[4], dtype=np.int64))

    def __len__(self):
        return self.g_end.size


@dataclass(frozen=True)
class BridgeData:
    """Slice-2 observations used to calibrate ``delta``."""

    p2: np.ndarray
    g2: np.ndarray

    @classmethod
    def from_dataset(cls, dataset):
        _require_truth(dataset)
        for s in dataset:
            if s.g[2] <= 0:
                raise SchemaError(f"{s.id}: ground truth at slice 2 must be > 0")
        return cls(np.array([s.p[2] for s in dataset]), np.array([s.g[2] for s in dataset]))


def _transitions(data):
    return data if isinstance(data, Transitions) else Transitions.from_dataset(data)


def _gamma_terms(m1, m2, p_end, g_end):
    shape, rate, floored = mm.match_gamma_arrays(m1, m2, p_end)
    terms = gamma_logpdf(g_end, shape, rate)
    # intervals too stiff to integrate make the parameters infeasible
    return np.where(np.isnan(terms), -np.inf, terms), floored


def sde_neg_loglik(params, data, return_floored=False):
    """Negative approximate log-likelihood of the inner-slice transitions."""
    tr = _transitions(data)
    if len(tr) == 0:
        return (0.0, 0) if return_floored else 0.0
    m1, m2 = mm.propagate_batch(tr.v_start, tr.p_start, tr.p_end, np.ones(len(tr)), params.theta0, params.alpha)
    terms, floored = _gamma_terms(m1, m2, tr.p_end, tr.g_end)
    nll = -float(np.sum(terms))
    return (nll, floored) if return_floored else nll


def delta_neg_loglik(delta, sde, data, return_floored=False):
    """Negative approximate log-likelihood of slice 2 after a bridge of length ``delta``."""
    bd = data if isinstance(data, BridgeData) else BridgeData.from_dataset(data)
    n = bd.p2.size
    m1, m2 = mm.propagate_batch(np.zeros(n), bd.p2, bd.p2, np.full(n, float(delta)), sde.theta0, sde.alpha)
    terms, floored = _gamma_terms(m1, m2, bd.p2, bd.g2)
    nll = -float(np.sum(terms))
    return (nll, floored) if return_floored else nll


def initial_sde_guess(dataset):
    """``theta0 = 1`` and ``alpha = Var(g - p) / mean(p)`` over the inner slices."""
    resid, preds = [], []
    for s in dataset:
        if s.N >= 4:
            resid.append(s.g[2:-2] - s.p[2:-2])
            preds.append(s.p[2:-2])
    if not resid:
        return 1.0, 1.0
    r = np.concatenate(resid)
    pm = float(np.mean(np.concatenate(preds)))
    var = float(np.var(r))
    return 1.0, max(var / pm, 1e-3) if pm > 0 else 1.0


def fit_sde(dataset, config=None, init=None):
    """Fit ``(theta0, alpha)``; returns ``(SdeParams, StageInfo)``.

    A supplied start is run alongside the method-of-moments start and the
    lower likelihood wins. For large ``theta0`` every transition is already
    stationary and the likelihood no longer depends on ``theta0``, so a single
    simplex started there can stall on that plateau.
    """
    config = config or FitConfig()
    tr = _transitions(dataset)
    if len(tr) == 0:
        raise EmptyCaseError("no inner-slice transitions (every heart has N <= 4)")
    guess = initial_sde_guess(dataset if not isinstance(dataset, Transitions) else [])
    starts = [tuple(init or config.sde_init or guess)]
    if tuple(guess) != starts[0]:
        starts.append(tuple(guess))
    bounds = [tuple(math.log(b) for b in config.sde_bounds[0]), tuple(math.log(b) for b in config.sde_bounds[1])]

    def objective(z):
        return sde_neg_loglik(SdeParams(math.exp(z[0]), math.exp(z[1])), tr)

    best, iters = None, 0
    for k, start in enumerate(starts):
        res = _minimize_log(objective, [math.log(start[0]), math.log(start[1])], 0.5, bounds, config)
        iters += int(res.nit)
        if best is None or res.fun < best[0].fun:
            best = (res, k)
    res, k = best
    fitted = SdeParams(math.exp(res.x[0]), math.exp(res.x[1]))
    note = "" if len(starts) == 1 else f"best of {len(starts)} starts: {'supplied' if k == 0 else 'moment'}"
    return fitted, StageInfo(iters, bool(res.success), float(res.fun), note)


def fit_delta(dataset, sde, config=None, init=1.0):
    """Calibrate the bridge length on slice 2; returns ``(delta, StageInfo)``."""
    config = config or FitConfig()
    bd = dataset if isinstance(dataset, BridgeData) else BridgeData.from_dataset(dataset)
    if bd.p2.size == 0:
        raise EmptyCaseError("no hearts to calibrate delta")
    bounds = [(math.log(DELTA_MIN), math.log(config.delta_max))]
    res = _minimize_log(
        lambda z: delta_neg_loglik(math.exp(z[0]), sde, bd), [math.log(min(init, config.delta_max))], 0.5, bounds, config
    )
    return math.exp(float(res.x[0])), StageInfo(int(res.nit), bool(res.success), float(res.fun))


def fit_all(dataset, config=None):
    """Run every fitting stage; a failing stage is recorded and the rest still run where possible."""
    config = config or FitConfig()
    report = FitReport(config=asdict(config))
    if not dataset:
        report.errors.append("EMPTY_CASE: empty dataset")
        return report
    edges = classify_edges(dataset)
    report.counts = edges.counts()
    c = report.counts
    report.lambda_u, report.lambda_d = fit_lambdas(c["u"], c["d"], c["edges"])
    report.stages["lambdas"] = StageInfo(0, True, -lambda_objective(report.lambda_u, report.lambda_d, c["u"], c["d"], c["edges"]))

    betas = fit_jump_betas(edges, report.lambda_u, report.lambda_d, config)
    for name, (value, info) in betas.items():
        setattr(report, name, value)
        report.stages[name] = info
    try:
        jump = JumpParams(report.lambda_u, report.lambda_d, report.beta_u0, report.beta_u1, report.beta_n)
        jump.check_sampleable()
        report.loglik_jump = jump_loglik(edges, jump)
    except SlicevolError as exc:
        report.errors.append(f"{exc.code}: {exc}")

    try:
        sde, info = fit_sde(dataset, config)
        report.theta0, report.alpha = sde.theta0, sde.alpha
        report.stages["sde"] = info
        nll, floored = sde_neg_loglik(sde, dataset, return_floored=True)
        report.loglik_sde = -nll
        report.variance_floored += floored
    except SlicevolError as exc:
        report.errors.append(f"{exc.code}: {exc}")
        return report

    try:
        delta, info = fit_delta(dataset, sde, config)
        report.delta = delta
        report.stages["delta"] = info
        nll, floored = delta_neg_loglik(delta, sde, dataset, return_floored=True)
        report.loglik_delta = -nll
        report.variance_floored += floored
    except SlicevolError as exc:
        report.errors.append(f"{exc.code}: {exc}")
    return report


# ------------------------------------------------------------------ experiment helpers


def volume_bins(dataset, n_bins):
    """Split hearts into ``n_bins`` equal-count groups by predicted volume.

    Returns ``(edges, groups)``: ``edges`` holds the ``n_bins + 1`` quantile
    boundaries (ml) and ``groups`` the member indices of each bin.
    """
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    vols = np.array([s.point_volume_ml() for s in dataset])
    order = np.argsort(vols, kind="stable")
    groups = [np.sort(g) for g in np.array_split(order, n_bins)]
    edges = np.quantile(vols, np.linspace(0.0, 1.0, n_bins + 1))
    return edges, groups


def fit_binned(dataset, n_bins, config=None):
    """Refit all parameters per predicted-volume bin.

    A bin whose own jump fit is degenerate (typically jump-up edges but no
    jump-down edge) takes the jump parameters of the pooled fit instead; its
    ``jump_pooled`` flag is set.
    """
    edges, groups = volume_bins(dataset, n_bins)
    pooled = None
    out = []
    for b, idx in enumerate(groups):
        subset = [dataset[i] for i in idx]
        vols = [s.point_volume_ml() for s in subset]
        rep = fit_all(subset, config)
        jump_errors = [e for e in rep.errors if e.startswith(DegenerateParamsError.code)]
        if jump_errors and len(jump_errors) == len(rep.errors):
            pooled = pooled or fit_all(dataset, config)
            _pool_jump(rep, pooled, subset)
        out.append(
            {
                "bin": b,
                "vol_lo_ml": float(edges[b]),
                "vol_hi_ml": float(edges[b + 1]),
                "vol_mid_ml": 0.5 * (min(vols) + max(vols)) if vols else None,
                "n_hearts": len(subset),
                "jump_pooled": bool(jump_errors),
                "report": rep,
            }
        )
    return out


def _pool_jump(rep, pooled, subset):
    for name in ("lambda_u", "lambda_d", "beta_u0", "beta_u1", "beta_n"):
        setattr(rep, name, getattr(pooled, name))
        if name in pooled.stages:
            rep.stages[name] = dataclasses.replace(pooled.stages[name], note="taken from the pooled fit")
    rep.stages["lambdas"] = dataclasses.replace(pooled.stages["lambdas"], note="taken from the pooled fit")
    rep.errors = []
    rep.loglik_jump = jump_loglik(classify_edges(subset), rep.params.jump)


def select_bin(bins, volume_ml):
    """Pick the bin whose volume range holds ``volume_ml`` (outer bins are open-ended)."""
    inner = [b["vol_lo_ml"] for b in bins[1:]]
    return bins[int(np.searchsorted(inner, volume_ml, side="right"))]


def nll_grid(dataset, center, span=4.0, size=25):
    """``(theta0, alpha, nll)`` over a log grid of half-width factor ``span`` around ``center``."""
    tr = _transitions(dataset)
    th = center.theta0 * np.exp(np.linspace(-math.log(span), math.log(span), size))
    al = center.alpha * np.exp(np.linspace(-math.log(span), math.log(span), size))
    rows = []
    for t in th:
        for a in al:
            rows.append((float(t), float(a), sde_neg_loglik(SdeParams(t, a), tr)))
    return rows


def stability(dataset, splits=3, repeats=3, seed=0, config=None, include_reversed=True):
    """Subset-stability harness: refit ``(theta0, alpha)`` on disjoint random parts.

    Each repeat permutes the hearts and cuts them into ``splits`` parts; with
    ``include_reversed`` every part is also fitted with its slice order
    reversed. Every fit is scored by the negative log-likelihood of the full,
    forward dataset.
    """
    config = config or FitConfig()
    full_tr = Transitions.from_dataset(dataset)
    full, full_info = fit_sde(dataset, config)
    nll_min = sde_neg_loglik(full, full_tr)
    rows = []
    directions = ["forward", "reversed"] if include_reversed else ["forward"]
    for r in range(repeats):
        perm = stream(seed, 0x5EB, r).permutation(len(dataset))
        for part, idx in enumerate(np.array_split(perm, splits)):
            subset = [dataset[i] for i in np.sort(idx)]
            for direction in directions:
                data = subset if direction == "forward" else [reverse(s) for s in subset]
                est, info = fit_sde(data, config)
                nll = sde_neg_loglik(est, full_tr)
                rows.append(
                    {
                        "repeat": r,
                        "part": part,
                        "direction": direction,
                        "n_hearts": len(subset),
                        "theta0": est.theta0,
                        "alpha": est.alpha,
                        "nll_full": nll,
                        "nll_full_min": nll_min,
                        "delta_nll": nll - nll_min,
                        "converged": info.converged,
                    }
                )
    return full, rows


def naive_baseline_std(voxel_probs, voxel_volume):
    """Mean and standard deviation of a volume built from independent Bernoulli voxels."""
    o = np.asarray(voxel_probs, dtype=float)
    if np.any(~np.isfinite(o)) or np.any(o < 0) or np.any(o > 1):
        raise DomainError("voxel probabilities must lie in [0, 1]")
    if not voxel_volume > 0:
        raise DomainError("voxel volume must be > 0")
    mean = voxel_volume * float(np.sum(o))
    var = voxel_volume**2 * float(np.sum(o * (1.0 - o)))
    return mean, math.sqrt(var)
