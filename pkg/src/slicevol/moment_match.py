"""Moment propagation for the error process ``V_t = X_t - p_t`` and gamma matching.

Over an interval where ``p`` is linear, the first two moments of ``V`` obey

    m1' = -theta_t m1
    m2' = -2 theta_t m2 + 2 alpha theta0 m1 + 2 alpha theta0 p_t

which is integrated with classic fixed-step RK4. The transition density is
then replaced by the gamma distribution with mean ``m1 + p_end`` and variance
``m2 - m1**2``.
"""
import math
from dataclasses import dataclass

import numpy as np

from ._accel import USE_NUMBA, njit
from .errors import DegenerateVarianceError, DomainError, NonPositiveMeanError

STEPS_PER_UNIT = 64
# keep theta * h well inside RK4's stability region for stiff (small-p) segments
MAX_THETA_H = 0.5
# beyond this the interval is treated as numerically infeasible
MAX_STEPS = 1 << 14
# decayed means are flushed to zero before they turn subnormal (very slow arithmetic)
M1_FLUSH = 1e-280
VARIANCE_FLOOR = 1e-12


@dataclass(frozen=True)
class MomentState:
    m1: float
    m2: float

    @property
    def var(self):
        return self.m2 - self.m1 * self.m1


@dataclass(frozen=True)
class GammaSurrogate:
    shape: float
    rate: float

    @property
    def mean(self):
        return self.shape / self.rate

    @property
    def var(self):
        return self.shape / (self.rate * self.rate)


def _rk4_loop(m1_start, m2_start, p_start, slope, length, theta0, alpha, steps, m1_out, m2_out):
    at = alpha * theta0
    c = 2.0 * at
    for i in range(m1_start.shape[0]):
        n = steps[i]
        if n <= 0:
            m1_out[i] = np.nan
            m2_out[i] = np.nan
            continue
        h = length[i] / n
        sl = slope[i]
        pa = p_start[i]
        m1 = m1_start[i]
        m2 = m2_start[i]
        for k in range(n):
            t = k * h
            p1 = pa + sl * t
            p2 = pa + sl * (t + 0.5 * h)
            p3 = pa + sl * (t + h)
            th1 = max(theta0, (at - sl) / p1)
            th2 = max(theta0, (at - sl) / p2)
            th3 = max(theta0, (at - sl) / p3)
            a1 = -th1 * m1
            b1 = -2.0 * th1 * m2 + c * m1 + c * p1
            y1 = m1 + 0.5 * h * a1
            z1 = m2 + 0.5 * h * b1
            a2 = -th2 * y1
            b2 = -2.0 * th2 * z1 + c * y1 + c * p2
            y2 = m1 + 0.5 * h * a2
            z2 = m2 + 0.5 * h * b2
            a3 = -th2 * y2
            b3 = -2.0 * th2 * z2 + c * y2 + c * p2
            y3 = m1 + h * a3
            z3 = m2 + h * b3
            a4 = -th3 * y3
            b4 = -2.0 * th3 * z3 + c * y3 + c * p3
            m1 = m1 + h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
            m2 = m2 + h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
            if abs(m1) < M1_FLUSH:
                m1 = 0.0
        m1_out[i] = m1
        m2_out[i] = m2


_rk4_numba = njit(_rk4_loop)


def _rk4_group(m1, m2, p_start, slope, length, theta0, alpha, steps):
    at = alpha * theta0
    c = 2.0 * at
    h = length / steps
    for k in range(steps):
        t = k * h
        p1 = p_start + slope * t
        p2 = p_start + slope * (t + 0.5 * h)
        p3 = p_start + slope * (t + h)
        th1 = np.maximum(theta0, (at - slope) / p1)
        th2 = np.maximum(theta0, (at - slope) / p2)
        th3 = np.maximum(theta0, (at - slope) / p3)
        a1 = -th1 * m1
        b1 = -2.0 * th1 * m2 + c * m1 + c * p1
        y1 = m1 + 0.5 * h * a1
        z1 = m2 + 0.5 * h * b1
        a2 = -th2 * y1
        b2 = -2.0 * th2 * z1 + c * y1 + c * p2
        y2 = m1 + 0.5 * h * a2
        z2 = m2 + 0.5 * h * b2
        a3 = -th2 * y2
        b3 = -2.0 * th2 * z2 + c * y2 + c * p2
        y3 = m1 + h * a3
        z3 = m2 + h * b3
        a4 = -th3 * y3
        b4 = -2.0 * th3 * z3 + c * y3 + c * p3
        m1 = m1 + h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        m2 = m2 + h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        m1 = np.where(np.abs(m1) < M1_FLUSH, 0.0, m1)
    return m1, m2


def _rk4_numpy(m1_start, m2_start, p_start, slope, length, theta0, alpha, steps, m1_out, m2_out):
    # intervals sharing a step count advance together
    m1_out[:] = np.nan
    m2_out[:] = np.nan
    for n in np.unique(steps):
        if n <= 0:
            continue
        idx = np.flatnonzero(steps == n)
        m1_out[idx], m2_out[idx] = _rk4_group(
            m1_start[idx], m2_start[idx], p_start[idx], slope[idx], length[idx], theta0, alpha, int(n)
        )


def auto_steps(length, p_start, p_end, theta0, alpha, per_unit=STEPS_PER_UNIT, max_steps=MAX_STEPS):
    """RK4 step count per interval: ``per_unit`` per slice, more where stiff.

    Intervals that would need more than ``max_steps`` get 0, which the
    integrators turn into NaN moments.
    """
    length = np.asarray(length, dtype=float)
    p_start = np.asarray(p_start, dtype=float)
    p_end = np.asarray(p_end, dtype=float)
    slope = (p_end - p_start) / length
    p_min = np.minimum(p_start, p_end)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        theta_max = np.maximum(theta0, (alpha * theta0 - slope) / p_min)
        need = np.maximum(np.ceil(per_unit * length), np.ceil(theta_max * length / MAX_THETA_H))
    need = np.where(np.isfinite(need), need, np.inf)
    return np.where(need <= max_steps, np.maximum(need, 1), 0).astype(np.int64)


def propagate_batch(v0, p_start, p_end, length, theta0, alpha, steps=None, m2_start=None, use_numba=None):
    """RK4 moments at the end of many independent linear-``p`` intervals.

    All arrays have one entry per interval. ``v0`` is the start value of ``V``
    (a point mass unless ``m2_start`` supplies a second moment). ``steps`` is
    a count shared by all intervals or one per interval; by default it comes
    from ``auto_steps``. Returns ``(m1, m2)`` arrays, NaN where an interval is
    too stiff to integrate within ``MAX_STEPS``.
    """
    v0 = np.ascontiguousarray(v0, dtype=float)
    m2_start = v0 * v0 if m2_start is None else np.ascontiguousarray(m2_start, dtype=float)
    p_start = np.ascontiguousarray(p_start, dtype=float)
    p_end = np.ascontiguousarray(p_end, dtype=float)
    length = np.ascontiguousarray(length, dtype=float)
    if np.any(p_start <= 0) or np.any(p_end <= 0):
        raise DomainError("prediction must be > 0 on every interval")
    if np.any(length <= 0):
        raise DomainError("interval length must be > 0")
    if steps is None:
        steps = auto_steps(length, p_start, p_end, theta0, alpha)
    else:
        if np.any(np.asarray(steps) < 1):
            raise ValueError("steps must be >= 1")
        steps = np.broadcast_to(np.asarray(steps, dtype=np.int64), v0.shape)
    steps = np.ascontiguousarray(steps, dtype=np.int64)
    slope = (p_end - p_start) / length
    m1 = np.empty_like(v0)
    m2 = np.empty_like(v0)
    if use_numba is None:
        use_numba = USE_NUMBA
    kernel = _rk4_numba if use_numba else _rk4_numpy
    kernel(v0, m2_start, p_start, slope, length, float(theta0), float(alpha), steps, m1, m2)
    return m1, m2


def propagate_moments(v_start, t_start, t_end, p, params, steps=None):
    """Moments of ``V`` at ``t_end`` started from the point mass ``v_start`` at ``t_start``.

    ``p`` is a ``PiecewiseLinear`` prediction; the interval is split at its
    nodes. ``steps`` is the total RK4 step count (default: 64 per slice unit,
    raised automatically for stiff pieces).
    """
    if not t_end > t_start:
        raise DomainError(f"invalid interval [{t_start}, {t_end}]")
    cuts = np.concatenate(([t_start], p.breakpoints(t_start, t_end), [t_end]))
    m1, m2 = float(v_start), float(v_start) ** 2
    total = t_end - t_start
    for a, b in zip(cuts[:-1], cuts[1:]):
        n = None if steps is None else max(1, int(round(steps * (b - a) / total)))
        r1, r2 = propagate_batch(
            [m1], [float(p(a))], [float(p(b))], [b - a], params.theta0, params.alpha, n, m2_start=[m2]
        )
        m1, m2 = float(r1[0]), float(r2[0])
    return MomentState(m1, m2)


def match_gamma(m, p_end, floor=False):
    """Gamma with mean ``m1 + p_end`` and variance ``m2 - m1**2``.

    With ``floor`` a non-positive variance is replaced by ``1e-12 * mean**2``
    instead of raising ``DegenerateVarianceError``.
    """
    mu = m.m1 + p_end
    var = m.m2 - m.m1 * m.m1
    if not mu > 0:
        raise NonPositiveMeanError(f"surrogate mean {mu} <= 0")
    if not var > 0:
        if not floor:
            raise DegenerateVarianceError(f"surrogate variance {var} <= 0")
        var = VARIANCE_FLOOR * mu * mu
    return GammaSurrogate(mu * mu / var, mu / var)


def match_gamma_arrays(m1, m2, p_end):
    """Vectorised ``match_gamma`` with flooring; returns ``(shape, rate, n_floored)``.

    NaN moments pass through as NaN and are not counted as floored.
    """
    mu = m1 + p_end
    var = m2 - m1 * m1
    bad = var <= 0
    var = np.where(bad, VARIANCE_FLOOR * mu * mu, var)
    return mu * mu / var, mu / var, int(bad.sum())
