"""Hierarchical distribution for the two outermost slices at each end.

A categorical draw picks one of three edge configurations:

* jump down (prob ``lambda_d``): both slices empty;
* jump up (prob ``lambda_u``): both slices filled, ``x0 ~ Gamma`` with mean
  ``(lambda_d / lambda_u) p1`` and ``x1 ~ Gamma`` with mean ``p1``;
* no jump (otherwise): ``x0 = 0`` and ``x1 ~ Gamma`` with mean ``p1``.

Each gamma has a global rate ``beta`` and shape ``mean * beta``, which keeps
``E[X0 + X1] = p1``.
"""
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import gammaln, xlogy

from .errors import DegenerateParamsError, DomainError, InadmissibleConfigError

NO_JUMP, JUMP_UP, JUMP_DOWN = "no_jump", "jump_up", "jump_down"
_CASE_CODES = {0: NO_JUMP, 1: JUMP_UP, 2: JUMP_DOWN}

# floor for gamma draws that underflow to 0.0 at very small shapes
_TINY = np.finfo(float).tiny


@dataclass(frozen=True)
class JumpParams:
    lambda_u: float
    lambda_d: float
    beta_u0: Optional[float]
    beta_u1: Optional[float]
    beta_n: Optional[float]

    def __post_init__(self):
        lu, ld = float(self.lambda_u), float(self.lambda_d)
        if not (0.0 <= lu <= 1.0 and 0.0 <= ld <= 1.0 and lu + ld <= 1.0 + 1e-12):
            raise DomainError(f"need lambda_u, lambda_d in [0, 1] with sum <= 1, got {lu}, {ld}")
        object.__setattr__(self, "lambda_u", lu)
        object.__setattr__(self, "lambda_d", ld)
        for name in ("beta_u0", "beta_u1", "beta_n"):
            v = getattr(self, name)
            if v is None:
                continue
            v = float(v)
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be positive, got {v}")
            object.__setattr__(self, name, v)

    @property
    def lambda_n(self):
        return max(0.0, 1.0 - self.lambda_u - self.lambda_d)

    def check_sampleable(self):
        """Raise if the mean constraint cannot hold or a needed rate is absent."""
        if self.lambda_u == 0.0 and self.lambda_d > 0.0:
            raise DegenerateParamsError("lambda_u = 0 with lambda_d > 0 cannot keep E[X0 + X1] = p1")
        if self.lambda_u > 0.0:
            if self.lambda_d == 0.0:
                raise DegenerateParamsError("lambda_d = 0 with lambda_u > 0 gives the jump-up x0 a zero mean")
            if self.beta_u0 is None or self.beta_u1 is None:
                raise DegenerateParamsError("jump-up branch enabled but beta_u0/beta_u1 absent")
        if self.lambda_n > 0.0 and self.beta_n is None:
            raise DegenerateParamsError("no-jump branch enabled but beta_n absent")


@dataclass(frozen=True)
class JumpSample:
    x0: float
    x1: float
    case: str


@dataclass(frozen=True)
class GammaSpec:
    shape: float
    rate: float

    @property
    def mean(self):
        return self.shape / self.rate

    @property
    def var(self):
        return self.shape / self.rate**2


def gamma_for_mean(mu, beta):
    """Gamma with rate ``beta`` and mean ``mu``."""
    if not (mu > 0 and beta > 0):
        raise DomainError(f"gamma_for_mean needs mu > 0 and beta > 0, got {mu}, {beta}")
    return GammaSpec(mu * beta, beta)


def gamma_logpdf(x, shape, rate):
    """Vectorised log density of Gamma(shape, rate) on the open support (0, inf)."""
    x = np.asarray(x, dtype=float)
    shape = np.asarray(shape, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = xlogy(shape, rate) - gammaln(shape) + xlogy(shape - 1.0, x) - rate * x
    return np.where(x > 0, out, -np.inf)


def u0_mean_factor(params):
    return params.lambda_d / params.lambda_u


def jump_log_density(x0, x1, p1, params):
    """Log density (log mass for the jump-down atom) of an edge configuration."""
    if not p1 > 0:
        raise DomainError("p1 must be > 0")
    if x0 < 0 or x1 < 0:
        raise InadmissibleConfigError("areas must be >= 0")
    if x0 > 0 and x1 == 0:
        raise InadmissibleConfigError("x0 > 0 with x1 = 0 is not a connected volume")
    if x0 == 0 and x1 == 0:
        return math.log(params.lambda_d) if params.lambda_d > 0 else -math.inf
    if x0 > 0:
        if params.lambda_u == 0 or params.lambda_d == 0:
            return -math.inf
        mu0 = u0_mean_factor(params) * p1
        return (
            math.log(params.lambda_u)
            + float(gamma_logpdf(x0, mu0 * params.beta_u0, params.beta_u0))
            + float(gamma_logpdf(x1, p1 * params.beta_u1, params.beta_u1))
        )
    if params.lambda_n == 0:
        return -math.inf
    return math.log(params.lambda_n) + float(gamma_logpdf(x1, p1 * params.beta_n, params.beta_n))


def jump_marginal_moments(p1, params):
    """Closed-form ``(E[X0], E[X1], E[X0 + X1])``."""
    if not p1 > 0:
        raise DomainError("p1 must be > 0")
    if params.lambda_u == 0 and params.lambda_d > 0:
        raise DegenerateParamsError("lambda_u = 0 with lambda_d > 0")
    e0 = params.lambda_d * p1
    e1 = (1.0 - params.lambda_d) * p1
    return e0, e1, e0 + e1


def sample_edges(p1, params, rng, n):
    """Draw ``n`` edge configurations for prediction ``p1``.

    Returns ``(x0, x1, case)`` arrays with case codes 0 = no jump, 1 = jump up,
    2 = jump down. The draw order is fixed (uniforms, then the u0, u1 and n
    gammas for every row) so results depend only on the stream.
    """
    if not p1 > 0:
        raise DomainError("p1 must be > 0")
    params.check_sampleable()
    u = rng.random(n)
    case = np.where(u < params.lambda_d, 2, np.where(u < params.lambda_d + params.lambda_u, 1, 0))
    x0 = np.zeros(n)
    x1 = np.zeros(n)
    if params.lambda_u > 0:
        g0 = rng.standard_gamma(u0_mean_factor(params) * p1 * params.beta_u0, n) / params.beta_u0
        g1 = rng.standard_gamma(p1 * params.beta_u1, n) / params.beta_u1
        up = case == 1
        x0[up] = np.maximum(g0[up], _TINY)
        x1[up] = np.maximum(g1[up], _TINY)
    if params.lambda_n > 0:
        gn = rng.standard_gamma(p1 * params.beta_n, n) / params.beta_n
        no = case == 0
        x1[no] = np.maximum(gn[no], _TINY)
    return x0, x1, case


def sample_jump(p1, params, rng):
    x0, x1, case = sample_edges(p1, params, rng, 1)
    return JumpSample(float(x0[0]), float(x1[0]), _CASE_CODES[int(case[0])])
