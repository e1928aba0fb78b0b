"""Monte Carlo volume distributions for one heart or a whole dataset.

A draw is assembled from independent edge samples at both ends, a bridge SDE
run on ``[2 - delta, 2]`` with the prediction frozen at ``p_2`` and the
interior SDE on ``[2, N - 2]``. The trajectory is linear between integer nodes
outside the interior, so the volume integral over ``[-1, N + 1]`` is

    x0 + x1 + x2 / 2 + int_2^{N-2} x dt + x_{N-2} / 2 + x_{N-1} + x_N

times the slice spacing.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .jump_model import sample_edges
from .rng import BLOCK_SIZE, blocks, key_of, stream
from .sde_core import DEFAULT_DT, PathGrid, euler_block, make_layout, pieces_for
from .slice_data import interpolate

log = logging.getLogger(__name__)

QUANTILE_LEVELS = (0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99)
COVERAGE_LEVELS = (0.5, 0.8, 0.9, 0.95)

# stream sub-keys
_SIM = 0x51


@dataclass(frozen=True)
class Trajectory:
    series_id: str
    edge_points: np.ndarray  # x_{-1} .. x_{N+1} at integer nodes
    interior_grid: PathGrid
    slice_spacing: float
    volume: float  # ml


@dataclass(frozen=True)
class VolumeDistribution:
    series_id: str
    draws: np.ndarray  # ml
    mean: float
    std: float
    quantiles: dict
    n_sims: int
    seed: int
    edge_ratios: np.ndarray  # (n_sims, 2): (x0 + x1) / p1 and (x_N + x_{N-1}) / p_{N-1}
    jump_down: np.ndarray  # (n_sims, 2) booleans
    min_value: float  # smallest SDE state seen over all draws
    n_nonpositive: int  # draws whose SDE path touched x <= 0
    n_inadmissible: int  # edges with x0 > 0 and x1 = 0

    @property
    def se(self):
        return self.std / np.sqrt(self.n_sims)


def integrate_trajectory(edge_points, interior=None, slice_spacing=1.0):
    """Volume in ml of a piecewise trajectory.

    ``edge_points`` are node values from ``t = -1`` to ``N + 1``. Without an
    interior grid the whole trajectory is linear between nodes. With one,
    the grid (times and values) replaces the nodes on ``[2, N - 2]``.
    """
    x = np.asarray(edge_points, dtype=float)
    if interior is None:
        area = float(np.sum(0.5 * (x[1:] + x[:-1])))
    else:
        times, values = (interior.times, interior.values) if isinstance(interior, PathGrid) else interior
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        # nodes -1, 0, 1, 2 are x[0..3]; nodes N-2 .. N+1 are the last four
        head = 0.5 * (x[0] + x[1]) + 0.5 * (x[1] + x[2]) + 0.5 * (x[2] + values[0])
        tail = 0.5 * (values[-1] + x[-3]) + 0.5 * (x[-3] + x[-2]) + 0.5 * (x[-2] + x[-1])
        mid = float(np.sum(0.5 * (values[1:] + values[:-1]) * np.diff(times))) if times.size > 1 else 0.0
        area = head + mid + tail
    return slice_spacing * area / 1000.0


def sim_layout(series, delta, dt=DEFAULT_DT):
    """Grid for the bridge plus the interior; piece ``k`` ends at node ``2 + k``."""
    p = series.p
    n = series.N
    pieces = [(2.0 - delta, 2.0, float(p[2]), float(p[2]), False)]
    if n > 4:
        pieces += pieces_for(interpolate(series), 2.0, float(n - 2))
    return make_layout(pieces, dt)


@dataclass(frozen=True)
class _Block:
    x0: np.ndarray
    x1: np.ndarray
    xn1: np.ndarray
    xn: np.ndarray
    case_lo: np.ndarray
    case_hi: np.ndarray
    nodes: np.ndarray  # (n, N - 3): x_2 .. x_{N-2}
    integral: np.ndarray
    xmin: np.ndarray
    grid: object


def draw_block(series, params, layout, rng, n, record=False):
    """Draw ``n`` full trajectories from one stream in a fixed order."""
    p = series.p
    x0, x1, c_lo = sample_edges(float(p[1]), params.jump, rng, n)
    xn, xn1, c_hi = sample_edges(float(p[-2]), params.jump, rng, n)
    z = rng.standard_normal((layout.total_steps, n))
    grid, seg_end, integral, xmin = euler_block(float(p[2]), layout, params.sde, z, record=record)
    return _Block(x0, x1, xn1, xn, c_lo, c_hi, seg_end, integral, xmin, grid)


def block_volume(series, blk):
    nodes = blk.nodes
    area = blk.x0 + blk.x1 + 0.5 * nodes[:, 0] + blk.integral + 0.5 * nodes[:, -1] + blk.xn1 + blk.xn
    return series.slice_spacing * area / 1000.0


def _truncate(blk, n):
    if n == blk.x0.size:
        return blk
    return _Block(*(None if v is None else v[:n] for v in (
        blk.x0, blk.x1, blk.xn1, blk.xn, blk.case_lo, blk.case_hi, blk.nodes, blk.integral, blk.xmin, blk.grid
    )))


def _block_stream(seed, series, b):
    return stream(seed, _SIM, key_of(series.id), b)


def simulate_heart(series, params, n_sims=1000, dt=DEFAULT_DT, seed=0, threads=1):
    """Monte Carlo volume distribution for one heart.

    Paths are drawn in blocks of ``BLOCK_SIZE``, each block from its own
    stream keyed by ``(seed, heart id, block)``. Draw ``i`` is therefore fixed
    by ``(seed, heart id, i)`` whatever ``n_sims`` or ``threads`` are.
    """
    if n_sims < 1:
        raise ValueError("n_sims must be >= 1")
    params.jump.check_sampleable()
    layout = sim_layout(series, params.delta, dt)
    vol = np.empty(n_sims)
    ratios = np.empty((n_sims, 2))
    down = np.empty((n_sims, 2), dtype=bool)
    xmin = np.empty(n_sims)
    inadmissible = np.zeros(n_sims, dtype=np.int64)
    p1, pn1 = float(series.p[1]), float(series.p[-2])

    def run(job):
        b, start, stop = job
        # always a full block, so path i never depends on n_sims
        blk = _truncate(draw_block(series, params, layout, _block_stream(seed, series, b), BLOCK_SIZE), stop - start)
        vol[start:stop] = block_volume(series, blk)
        ratios[start:stop, 0] = (blk.x0 + blk.x1) / p1
        ratios[start:stop, 1] = (blk.xn + blk.xn1) / pn1
        down[start:stop, 0] = blk.case_lo == 2
        down[start:stop, 1] = blk.case_hi == 2
        xmin[start:stop] = blk.xmin
        inadmissible[start:stop] = ((blk.x0 > 0) & (blk.x1 == 0)).astype(np.int64) + (
            (blk.xn > 0) & (blk.xn1 == 0)
        ).astype(np.int64)

    jobs = list(blocks(n_sims, BLOCK_SIZE))
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, jobs))
    else:
        for job in jobs:
            run(job)

    n_bad = int(np.sum(xmin <= 0))
    if n_bad:
        log.warning("%s: %d of %d draws touched x <= 0 in the SDE", series.id, n_bad, n_sims)
    q = np.quantile(vol, QUANTILE_LEVELS)
    return VolumeDistribution(
        series_id=series.id,
        draws=vol,
        mean=float(np.mean(vol)),
        std=float(np.std(vol, ddof=1)) if n_sims > 1 else 0.0,
        quantiles={float(k): float(v) for k, v in zip(QUANTILE_LEVELS, q)},
        n_sims=int(n_sims),
        seed=int(seed),
        edge_ratios=ratios,
        jump_down=down,
        min_value=float(xmin.min()),
        n_nonpositive=n_bad,
        n_inadmissible=int(inadmissible.sum()),
    )


def simulate_trajectory(series, params, index=0, dt=DEFAULT_DT, seed=0):
    """Re-draw the single trajectory with path number ``index`` (same stream as ``simulate_heart``)."""
    layout = sim_layout(series, params.delta, dt)
    b, i = divmod(index, BLOCK_SIZE)
    # the whole block must be drawn to reproduce the stream's order
    blk = draw_block(series, params, layout, _block_stream(seed, series, b), BLOCK_SIZE, record=True)
    n_nodes = series.N
    bridge_steps = int(layout.nsteps[0])
    times = layout.times[bridge_steps:]
    values = blk.grid[i, bridge_steps:]
    nodes = blk.nodes[i]
    edge = np.concatenate(([0.0, blk.x0[i], blk.x1[i]], nodes, [blk.xn1[i], blk.xn[i], 0.0]))
    grid = PathGrid(2.0, float(n_nodes - 2), dt, values, times)
    volume = integrate_trajectory(edge, grid, series.slice_spacing)
    return Trajectory(series.id, edge, grid, series.slice_spacing, volume)


# ------------------------------------------------------------------ evaluation


def central_interval(draws, level):
    lo, hi = np.quantile(draws, [(1.0 - level) / 2.0, (1.0 + level) / 2.0])
    return float(lo), float(hi)


def _covers(draws, level, value):
    lo, hi = central_interval(draws, level)
    return bool(lo <= value <= hi)


@dataclass
class Evaluation:
    rows: list
    calibration: list  # (nominal, empirical, n)
    errors_truth: np.ndarray  # (true - pred) / pred per heart
    errors_sim: np.ndarray  # (draw - pred) / pred, pooled
    edge_ratio_truth: np.ndarray
    edge_ratio_sim: np.ndarray

    ROW_FIELDS = (
        "id", "true_ml", "pred_ml", "mean_ml", "std_ml",
        "q05", "q25", "q50", "q75", "q95", "cov50", "cov90",
    )


def evaluate(dataset, params, n_sims=1000, seed=0, dt=DEFAULT_DT, threads=1, levels=COVERAGE_LEVELS):
    """Per-heart volume distributions scored against the ground truth."""
    rows, hits = [], {lv: [] for lv in levels}
    err_t, err_s, er_t, er_s = [], [], [], []
    for s in dataset:
        if s.g is None:
            raise ValueError(f"{s.id}: evaluation needs truth_area_mm2")
        dist = simulate_heart(s, params, n_sims=n_sims, dt=dt, seed=seed, threads=threads)
        true_ml = s.truth_volume_ml()
        pred_ml = s.point_volume_ml()
        for lv in levels:
            hits[lv].append(_covers(dist.draws, lv, true_ml))
        q = np.quantile(dist.draws, [0.05, 0.25, 0.5, 0.75, 0.95])
        rows.append(
            {
                "id": s.id,
                "true_ml": true_ml,
                "pred_ml": pred_ml,
                "mean_ml": dist.mean,
                "std_ml": dist.std,
                "q05": float(q[0]),
                "q25": float(q[1]),
                "q50": float(q[2]),
                "q75": float(q[3]),
                "q95": float(q[4]),
                "cov50": int(_covers(dist.draws, 0.5, true_ml)),
                "cov90": int(_covers(dist.draws, 0.9, true_ml)),
            }
        )
        err_t.append((true_ml - pred_ml) / pred_ml)
        err_s.append((dist.draws - pred_ml) / pred_ml)
        er_t += [(s.g[0] + s.g[1]) / s.p[1], (s.g[-1] + s.g[-2]) / s.p[-2]]
        er_s.append(dist.edge_ratios.ravel())
    calibration = [(lv, float(np.mean(hits[lv])) if hits[lv] else float("nan"), len(hits[lv])) for lv in levels]
    return Evaluation(
        rows,
        calibration,
        np.array(err_t),
        np.concatenate(err_s) if err_s else np.empty(0),
        np.array(er_t),
        np.concatenate(er_s) if er_s else np.empty(0),
    )


def histogram(values, edges):
    """``[(bin_left, bin_right, count), ...]`` with the last bin closed."""
    counts, edges = np.histogram(np.asarray(values, dtype=float), bins=np.asarray(edges, dtype=float))
    return [(float(a), float(b), int(c)) for a, b, c in zip(edges[:-1], edges[1:], counts)]


def error_bins(*samples, n_bins=40):
    vals = np.concatenate([np.asarray(s, dtype=float).ravel() for s in samples if np.size(s)])
    lo, hi = float(vals.min()), float(vals.max())
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    return np.linspace(lo, hi, n_bins + 1)


def ratio_bins(*samples, width=0.05):
    vals = np.concatenate([np.asarray(s, dtype=float).ravel() for s in samples if np.size(s)])
    top = max(float(vals.max()), width)
    n = int(np.ceil(top / width)) + 1
    return width * np.arange(n + 1)
