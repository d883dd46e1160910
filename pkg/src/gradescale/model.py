"""Dynamic Bradley-Terry posterior over the grade-scale slope and climber grades.

The probability a climber of grade ``C`` sends a route of grade ``R`` is
``logistic(m * (C - R))``. Climber grades live on a ``[climbers x pages]``
matrix. Within a climber's data span each page follows a Gaussian random walk
from the previous one; pages up to and including the first data page, and
pages after the last, get an independent ``normal(grade_prior_mean,
grade_prior_sd)`` prior.

The sampler works on the unconstrained vector ``theta = (log m, grades.ravel())``
(or just the grades when ``m`` is fixed); the log-Jacobian ``log m`` is added on
that side only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from .grades import GradeSystem
from .logbook import PreparedDataset

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class DimensionMismatch(ValueError):
    pass


class DomainError(ValueError):
    pass


# Default grade-prior centre per system; 18 is the Ewbank "typical amateur" grade.
_GRADE_PRIOR_MEAN = {
    GradeSystem.EWBANK: 18.0,
    GradeSystem.FRENCH: 18.0,
    GradeSystem.UIAA: 17.0,
    GradeSystem.VGRADE: 4.0,
}


@dataclass(frozen=True)
class ModelConfig:
    m_prior_mean: float = 0.69
    m_prior_sd: float = 0.3
    grade_prior_mean: float = 18.0
    grade_prior_sd: float = 5.0
    walk_sd: float = 0.5
    fixed_m: float | None = None

    def __post_init__(self):
        for name in ("m_prior_sd", "grade_prior_sd", "walk_sd"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.fixed_m is not None and not self.fixed_m > 0:
            raise ValueError("fixed_m must be positive")

    @classmethod
    def for_system(cls, system: GradeSystem, **overrides) -> "ModelConfig":
        cfg = cls(grade_prior_mean=_GRADE_PRIOR_MEAN[GradeSystem(system)])
        return replace(cfg, **overrides)


@dataclass
class ParameterState:
    m: float
    grades: np.ndarray

    def __post_init__(self):
        self.grades = np.asarray(self.grades, dtype=float)
        if self.grades.ndim != 2:
            raise DimensionMismatch("grades must be a [climbers x pages] matrix")
        if not self.m > 0:
            raise DomainError("m must be positive")

    @property
    def d(self) -> float:
        """Multiplicative increase in failure odds per grade increment."""
        return math.exp(self.m)

    def to_unconstrained(self, include_m: bool = True) -> np.ndarray:
        flat = self.grades.ravel()
        if not include_m:
            return flat.copy()
        return np.concatenate(([math.log(self.m)], flat))

    @classmethod
    def from_unconstrained(
        cls, theta: np.ndarray, shape: tuple[int, int], fixed_m: float | None = None
    ) -> "ParameterState":
        theta = np.asarray(theta, dtype=float)
        if fixed_m is None:
            return cls(m=math.exp(theta[0]), grades=theta[1:].reshape(shape))
        return cls(m=fixed_m, grades=theta.reshape(shape))


def p_send(climber_grade, route_grade, m):
    """Probability of a clean ascent, ``1 / (1 + exp(m * (R - C)))``."""
    return expit(np.multiply(m, np.subtract(climber_grade, route_grade)))


def expected_failures(p):
    """Expected failed attempts before the first send, ``(1 - p) / p``."""
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0) or np.any(p > 1):
        raise DomainError("p must lie in (0, 1]")
    out = (1.0 - p) / p
    return float(out) if out.ndim == 0 else out


def p_from_failures(expected):
    """Inverse of :func:`expected_failures`: ``1 / (E + 1)``."""
    expected = np.asarray(expected, dtype=float)
    if np.any(expected < 0):
        raise DomainError("expected failures must be non-negative")
    out = 1.0 / (expected + 1.0)
    return float(out) if out.ndim == 0 else out


def _normal_logpdf(x, mean, sd):
    z = (x - mean) / sd
    return -0.5 * z * z - math.log(sd) - _LOG_SQRT_2PI


class Posterior:
    """Log density and gradient for one dataset under one configuration.

    Index arrays are built once so that repeated gradient calls are cheap.
    """

    def __init__(self, data: PreparedDataset, config: ModelConfig | None = None):
        self.data = data
        self.config = config or ModelConfig()
        C, P = data.n_climbers, data.n_pages
        self.shape = (C, P)
        self.fixed_m = self.config.fixed_m
        self.dim = C * P + (0 if self.fixed_m is not None else 1)

        pages = np.arange(1, P + 1)
        lo = data.min_page[:, None]
        hi = data.max_page[:, None]
        walk = (pages[None, :] > lo) & (pages[None, :] <= hi)
        self.walk_idx = np.flatnonzero(walk.ravel())
        self.anchor_idx = np.flatnonzero(~walk.ravel())
        self.obs_idx = data.climber * P + (data.page - 1)
        self.x = data.x
        self.y = data.y.astype(float)
        self._n_grades = C * P

    # -- components ---------------------------------------------------------

    def m_prior(self, m: float) -> float:
        cfg = self.config
        return float(_normal_logpdf(m, cfg.m_prior_mean, cfg.m_prior_sd))

    def grade_prior(self, grades: np.ndarray) -> float:
        cfg = self.config
        g = np.asarray(grades, dtype=float).ravel()
        anchor = _normal_logpdf(g[self.anchor_idx], cfg.grade_prior_mean, cfg.grade_prior_sd)
        step = g[self.walk_idx] - g[self.walk_idx - 1]
        walk = _normal_logpdf(step, 0.0, cfg.walk_sd)
        return float(anchor.sum() + walk.sum())

    def bernoulli(self, m: float, grades: np.ndarray) -> float:
        g = np.asarray(grades, dtype=float).ravel()
        eta = m * (g[self.obs_idx] - self.x)
        # log sigmoid(eta) for y=1, log sigmoid(-eta) for y=0.
        return float(np.sum(self.y * eta - np.logaddexp(0.0, eta)))

    def check(self, state: ParameterState) -> None:
        if state.grades.shape != self.shape:
            raise DimensionMismatch(
                f"grades have shape {state.grades.shape}, dataset needs {self.shape}"
            )

    def log_posterior(self, state: ParameterState) -> float:
        self.check(state)
        lp = self.grade_prior(state.grades) + self.bernoulli(state.m, state.grades)
        if self.fixed_m is None:
            lp += self.m_prior(state.m)
        return lp

    # -- unconstrained ------------------------------------------------------

    def logp_and_grad(self, theta: np.ndarray) -> tuple[float, np.ndarray]:
        """Log density on the unconstrained scale (Jacobian included) and its gradient."""
        cfg = self.config
        if self.fixed_m is None:
            log_m = theta[0]
            m = math.exp(log_m)
            g = theta[1:]
        else:
            m = self.fixed_m
            g = theta

        grad_g = np.zeros(self._n_grades)

        ga = g[self.anchor_idx]
        za = (ga - cfg.grade_prior_mean) / cfg.grade_prior_sd
        lp = -0.5 * np.dot(za, za) - len(ga) * (math.log(cfg.grade_prior_sd) + _LOG_SQRT_2PI)
        grad_g[self.anchor_idx] = -za / cfg.grade_prior_sd

        wi = self.walk_idx
        step = g[wi] - g[wi - 1]
        zw = step / cfg.walk_sd
        lp += -0.5 * np.dot(zw, zw) - len(wi) * (math.log(cfg.walk_sd) + _LOG_SQRT_2PI)
        slope = step / (cfg.walk_sd * cfg.walk_sd)
        grad_g[wi] -= slope
        grad_g[wi - 1] += slope

        delta = g[self.obs_idx] - self.x
        eta = m * delta
        lp += np.dot(self.y, eta) - np.sum(np.logaddexp(0.0, eta))
        resid = self.y - expit(eta)
        grad_g += m * np.bincount(self.obs_idx, weights=resid, minlength=self._n_grades)

        if self.fixed_m is not None:
            return float(lp), grad_g

        dm = -(m - cfg.m_prior_mean) / (cfg.m_prior_sd * cfg.m_prior_sd) + np.dot(resid, delta)
        lp += _normal_logpdf(m, cfg.m_prior_mean, cfg.m_prior_sd) + log_m
        grad = np.empty(self.dim)
        grad[0] = dm * m + 1.0
        grad[1:] = grad_g
        return float(lp), grad

    def logp(self, theta: np.ndarray) -> float:
        return self.logp_and_grad(theta)[0]

    def unpack(self, theta: np.ndarray) -> ParameterState:
        return ParameterState.from_unconstrained(theta, self.shape, self.fixed_m)

    def pack(self, state: ParameterState) -> np.ndarray:
        self.check(state)
        return state.to_unconstrained(include_m=self.fixed_m is None)


def log_posterior(
    state: ParameterState, data: PreparedDataset, config: ModelConfig | None = None
) -> float:
    """Log posterior on the constrained scale (no Jacobian), normalising constants kept."""
    return Posterior(data, config).log_posterior(state)


def log_likelihood(state: ParameterState, data: PreparedDataset) -> float:
    """The Bernoulli-logit term alone."""
    post = Posterior(data)
    post.check(state)
    return post.bernoulli(state.m, state.grades)


def grad_log_posterior(
    state: ParameterState, data: PreparedDataset, config: ModelConfig | None = None
) -> np.ndarray:
    """Gradient of the unconstrained log density at ``state``.

    The first coordinate is with respect to ``log m`` (and includes the +1
    from the Jacobian) unless the config fixes ``m``.
    """
    post = Posterior(data, config)
    return post.logp_and_grad(post.pack(state))[1]
