"""Mean-reverting square-root diffusion along the slice axis.

The area process follows

    dX_t = (p'_t - theta_t (X_t - p_t)) dt + sqrt(2 alpha theta0 X_t) dW_t,
    theta_t = max(theta0, (alpha theta0 - p'_t) / p_t),

where ``p`` is a piecewise-linear prediction. Paths are integrated with
Euler-Maruyama using full truncation (the state is clamped at zero inside the
drift and the square root, the stored value is not).
"""
import math
from dataclasses import dataclass

import numpy as np

from ._accel import USE_NUMBA, njit
from .errors import DomainError
from .rng import blocks, stream
from .slice_data import PiecewiseLinear

DEFAULT_DT = 0.01


@dataclass(frozen=True)
class SdeParams:
    theta0: float
    alpha: float

    def __post_init__(self):
        for name in ("theta0", "alpha"):
            v = float(getattr(self, name))
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be positive, got {v}")
            object.__setattr__(self, name, v)


@dataclass(frozen=True)
class PathGrid:
    t_start: float
    t_end: float
    dt: float
    values: np.ndarray
    times: np.ndarray


def theta_from(p, pdot, theta0, alpha):
    """Mean-reversion rate for prediction value ``p`` and slope ``pdot``."""
    if np.any(np.asarray(p) <= 0):
        raise DomainError("theta_t needs p(t) > 0")
    return np.maximum(theta0, (alpha * theta0 - pdot) / p)


def theta_t(t, p, params):
    return float(theta_from(p(t), p.slope(t), params.theta0, params.alpha))


def drift(x, t, p, params):
    pt = p(t)
    return float(p.slope(t) - theta_from(pt, p.slope(t), params.theta0, params.alpha) * (x - pt))


def diffusion(x, params):
    return math.sqrt(2.0 * params.alpha * params.theta0 * max(x, 0.0))


# ------------------------------------------------------------------ layout


@dataclass(frozen=True)
class Layout:
    """Fixed time grid made of linear pieces; each piece has a constant slope."""

    p0: np.ndarray  # prediction at the start of each piece
    slope: np.ndarray
    h: np.ndarray  # step size within the piece
    nsteps: np.ndarray
    integrate: np.ndarray  # 1 if the piece counts toward the volume integral
    times: np.ndarray  # all grid times, length sum(nsteps) + 1

    @property
    def total_steps(self):
        return int(self.nsteps.sum())

    def node_index(self):
        """Grid index at the end of every piece."""
        return np.cumsum(self.nsteps)


def make_layout(pieces, dt):
    """Build a grid from ``[(t0, t1, p_at_t0, p_at_t1, integrate), ...]``.

    Pieces must be contiguous. Step counts use cumulative rounding so the whole
    grid has ``round((t_end - t_start) / dt)`` steps and lands on every piece
    boundary.
    """
    if not dt > 0:
        raise DomainError("dt must be positive")
    t_start = pieces[0][0]
    p0, slope, h, nsteps, integ, times = [], [], [], [], [], [t_start]
    done = 0
    for t0, t1, pa, pb, flag in pieces:
        if not t1 > t0:
            raise DomainError(f"empty piece [{t0}, {t1}]")
        if pa <= 0 or pb <= 0:
            raise DomainError("prediction must be > 0 on the simulated interval")
        target = max(int(round((t1 - t_start) / dt)), done + 1)
        n = target - done
        done = target
        step = (t1 - t0) / n
        p0.append(pa)
        slope.append((pb - pa) / (t1 - t0))
        h.append(step)
        nsteps.append(n)
        integ.append(1 if flag else 0)
        times.extend(t0 + step * np.arange(1, n + 1))
        times[-1] = t1
    return Layout(
        np.array(p0), np.array(slope), np.array(h), np.array(nsteps, dtype=np.int64),
        np.array(integ, dtype=np.int64), np.array(times),
    )


def pieces_for(p, t_start, t_end, integrate=True):
    """Split ``[t_start, t_end]`` at the interpolant's nodes."""
    if not t_end > t_start:
        raise DomainError(f"invalid interval [{t_start}, {t_end}]")
    if t_start < p.t_min or t_end > p.t_max:
        raise DomainError("interval leaves the interpolant's support")
    cuts = np.concatenate(([t_start], p.breakpoints(t_start, t_end), [t_end]))
    out = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        out.append((float(a), float(b), float(p(a)), float(p(b)), integrate))
    return out


# ------------------------------------------------------------------ kernels


def step_schedule(layout, params):
    """Per-step ``(p_k, theta_k, slope, h, sqrt h, integrate)``; identical for every path."""
    at = params.alpha * params.theta0
    cols = [[] for _ in range(6)]
    for s in range(layout.p0.size):
        n = int(layout.nsteps[s])
        hs = float(layout.h[s])
        sl = float(layout.slope[s])
        pk = layout.p0[s] + sl * (np.arange(n) * hs)
        cols[0].append(pk)
        cols[1].append(np.maximum(params.theta0, (at - sl) / pk))
        cols[2].append(np.full(n, sl))
        cols[3].append(np.full(n, hs))
        cols[4].append(np.full(n, math.sqrt(hs)))
        cols[5].append(np.full(n, layout.integrate[s], dtype=np.int64))
    return tuple(np.ascontiguousarray(np.concatenate(c)) for c in cols)


def _euler_loop(x_start, pk, th, sl, hs, sq, integ, seg_stop, c, z, grid_out, seg_end, integral, xmin):
    # steps outer, paths inner: row z[k] is contiguous and paths are independent chains
    n_paths = z.shape[1]
    record = grid_out.shape[0] > 0
    x = x_start.copy()
    lo = x_start.copy()
    acc = np.zeros(n_paths)
    if record:
        grid_out[:, 0] = x
    seg = 0
    for k in range(pk.shape[0]):
        a = sl[k]
        b = th[k]
        p = pk[k]
        h = hs[k]
        q = sq[k]
        flag = integ[k] == 1
        zk = z[k]
        for i in range(n_paths):
            xi = x[i]
            xp = max(xi, 0.0)
            xn = xi + (a - b * (xp - p)) * h + math.sqrt(c * xp) * q * zk[i]
            if flag:
                acc[i] += 0.5 * (xi + xn) * h
            x[i] = xn
            if xn < lo[i]:
                lo[i] = xn
            if record:
                grid_out[i, k + 1] = xn
        if k + 1 == seg_stop[seg]:
            seg_end[:, seg] = x
            seg += 1
    integral[:] = acc
    xmin[:] = lo


_euler_numba = njit(_euler_loop)


def _euler_numpy(x_start, pk, th, sl, hs, sq, integ, seg_stop, c, z, grid_out, seg_end, integral, xmin):
    record = grid_out.shape[0] > 0
    x = x_start.copy()
    lo = x.copy()
    acc = np.zeros_like(x)
    seg = 0
    if record:
        grid_out[:, 0] = x
    for k in range(pk.shape[0]):
        xp = np.maximum(x, 0.0)
        xn = x + (sl[k] - th[k] * (xp - pk[k])) * hs[k] + np.sqrt(c * xp) * sq[k] * z[k]
        if integ[k] == 1:
            acc += 0.5 * (x + xn) * hs[k]
        x = xn
        np.minimum(lo, x, out=lo)
        if record:
            grid_out[:, k + 1] = x
        if k + 1 == seg_stop[seg]:
            seg_end[:, seg] = x
            seg += 1
    integral[:] = acc
    xmin[:] = lo


def euler_block(x_start, layout, params, z, record=False, use_numba=None):
    """Integrate one block of paths driven by standard normals ``z``.

    ``z`` has shape ``(total_steps, n_paths)``: row ``k`` drives step ``k``.
    Returns ``(grid, piece_end, integral, xmin)``; ``grid`` is None unless
    ``record``. ``integral`` is the trapezoid integral of x over the pieces
    flagged for integration.
    """
    if z.ndim != 2 or z.shape[0] != layout.total_steps:
        raise ValueError(f"need normals of shape ({layout.total_steps}, n_paths), got {z.shape}")
    n = z.shape[1]
    x_start = np.ascontiguousarray(np.broadcast_to(np.asarray(x_start, dtype=float), (n,)))
    grid = np.empty((n, layout.total_steps + 1)) if record else np.empty((0, 0))
    seg_end = np.empty((n, layout.p0.size))
    integral = np.empty(n)
    xmin = np.empty(n)
    if use_numba is None:
        use_numba = USE_NUMBA
    kernel = _euler_numba if use_numba else _euler_numpy
    pk, th, sl, hs, sq, integ = step_schedule(layout, params)
    kernel(
        x_start, pk, th, sl, hs, sq, integ, layout.node_index(),
        2.0 * params.alpha * params.theta0, np.ascontiguousarray(z, dtype=float),
        grid, seg_end, integral, xmin,
    )
    return (grid if record else None), seg_end, integral, xmin


# ------------------------------------------------------------------ public simulators


def _check_start(x_start):
    if np.any(np.asarray(x_start) <= 0):
        raise DomainError("x_start must be > 0")


def simulate_paths(p, t_start, t_end, x_start, params, dt=DEFAULT_DT, n_paths=1, rng=None, record=True):
    """Simulate ``n_paths`` paths on ``[t_start, t_end]``; returns ``(times, values)``.

    ``values`` has shape ``(n_paths, len(times))`` when ``record`` is true and
    holds only the terminal values otherwise.
    """
    _check_start(x_start)
    layout = make_layout(pieces_for(p, t_start, t_end), dt)
    if rng is None:
        rng = np.random.default_rng()
    z = rng.standard_normal((layout.total_steps, n_paths))
    grid, seg_end, _, _ = euler_block(x_start, layout, params, z, record=record)
    return layout.times, (grid if record else seg_end[:, -1])


def simulate_path(p, t_start, t_end, x_start, params, dt=DEFAULT_DT, rng=None):
    times, values = simulate_paths(p, t_start, t_end, x_start, params, dt, 1, rng)
    return PathGrid(float(t_start), float(t_end), float(dt), values[0], times)


def constant_prediction(value, t_start, t_end):
    return PiecewiseLinear.constant(value, t_start, t_end)


def terminal_values(p, t_start, t_end, x_start, params, dt=DEFAULT_DT, n_paths=1, seed=0, block_size=1024):
    """Terminal states of ``n_paths`` paths, drawn block by block to bound memory.

    Block ``b`` uses the stream ``(seed, b)``, so the result is reproducible
    and independent of how it is consumed.
    """
    _check_start(x_start)
    layout = make_layout(pieces_for(p, t_start, t_end), dt)
    out = np.empty(n_paths)
    for b, start, stop in blocks(n_paths, block_size):
        z = stream(seed, b).standard_normal((layout.total_steps, stop - start))
        _, seg_end, _, _ = euler_block(x_start, layout, params, z)
        out[start:stop] = seg_end[:, -1]
    return out
