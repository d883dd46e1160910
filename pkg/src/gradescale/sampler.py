"""Hamiltonian Monte Carlo with warm-up adaptation.

Each iteration integrates a leapfrog trajectory of a jittered number of steps
(uniform on ``[1, max_leapfrog_depth * base_leapfrog_steps]``) and applies a
Metropolis correction. During warm-up the step size is tuned by dual
averaging toward ``target_accept`` and a diagonal inverse metric is estimated
from the draws of doubling "slow" windows, with a fast window at either end.

Chains are seeded from ``(seed, chain_index)`` and are bit-reproducible.
"""

from __future__ import annotations

import csv
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .logbook import PreparedDataset
from .model import ModelConfig, Posterior

logger = logging.getLogger(__name__)

LogpGrad = Callable[[np.ndarray], "tuple[float, np.ndarray]"]

MAX_ENERGY_ERROR = 1000.0


class SamplerError(RuntimeError):
    pass


class NonFiniteDensity(SamplerError):
    pass


class DivergenceStorm(UserWarning):
    """More than 10% of post-warm-up transitions diverged."""


@dataclass(frozen=True)
class SamplerConfig:
    chains: int = 4
    warmup_iters: int = 1000
    sampling_iters: int = 1000
    seed: int = 0
    target_accept: float = 0.8
    max_leapfrog_depth: int = 10
    base_leapfrog_steps: int = 3
    adapt: bool = True
    init_jitter: float = 0.1
    threads: int = 1

    def __post_init__(self):
        if self.chains < 1:
            raise ValueError("chains must be >= 1")
        if self.sampling_iters < 1:
            raise ValueError("sampling_iters must be >= 1")
        if self.adapt and self.warmup_iters < 100:
            raise ValueError("warmup_iters must be >= 100 when adaptation is enabled")
        if not 0 < self.target_accept < 1:
            raise ValueError("target_accept must lie in (0, 1)")
        if self.max_leapfrog_depth < 1 or self.base_leapfrog_steps < 1:
            raise ValueError("leapfrog step bounds must be >= 1")

    @property
    def max_steps(self) -> int:
        return self.max_leapfrog_depth * self.base_leapfrog_steps


@dataclass
class ChainResult:
    draws: np.ndarray  # unconstrained, [sampling_iters x dim]
    accept_stat: np.ndarray  # post-warm-up
    divergent: np.ndarray  # post-warm-up
    step_size: float
    inv_metric: np.ndarray
    warmup_divergences: int = 0


class DualAveraging:
    """Nesterov dual averaging of log step size (Hoffman & Gelman 2014)."""

    def __init__(self, step_size: float, target: float, gamma=0.1, t0=10.0, kappa=0.75):
        self.target = target
        self.gamma, self.t0, self.kappa = gamma, t0, kappa
        self.restart(step_size)

    def restart(self, step_size: float) -> None:
        self.mu = math.log(10.0 * step_size)
        self.h_bar = 0.0
        self.log_eps_bar = 0.0
        self.t = 0

    def update(self, accept_stat: float) -> float:
        self.t += 1
        t = self.t
        eta = 1.0 / (t + self.t0)
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.target - accept_stat)
        log_eps = self.mu - math.sqrt(t) / self.gamma * self.h_bar
        w = t ** (-self.kappa)
        self.log_eps_bar = w * log_eps + (1.0 - w) * self.log_eps_bar
        return math.exp(log_eps)

    @property
    def final_step_size(self) -> float:
        return math.exp(self.log_eps_bar)


def adaptation_windows(
    warmup: int, init_buffer=75, term_buffer=50, base_window=25
) -> tuple[int, list[int]]:
    """Start of the first slow window and the (exclusive) ends of all slow windows.

    Mirrors the usual three-stage layout: a fast initial buffer, doubling slow
    windows with the last one stretched to the terminal buffer, then a fast
    terminal buffer. Short warm-ups fall back to 15%/75%/10% proportions.
    """
    if init_buffer + base_window + term_buffer > warmup:
        init_buffer = int(0.15 * warmup)
        term_buffer = int(0.1 * warmup)
        base_window = warmup - init_buffer - term_buffer
    ends = []
    start = init_buffer
    size = base_window
    slow_end = warmup - term_buffer
    while start < slow_end:
        end = start + size
        if end + 2 * size > slow_end:
            end = slow_end
        ends.append(end)
        start = end
        size *= 2
    return init_buffer, ends


class _Welford:
    def __init__(self, dim: int):
        self.n = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)

    def add(self, x: np.ndarray) -> None:
        self.n += 1
        delta = x - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (x - self.mean)

    def regularised_variance(self) -> np.ndarray:
        n = self.n
        var = self.m2 / (n - 1)
        return (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))


def _leapfrog(theta, rho, grad, eps, inv_metric, n_steps, logp_grad):
    rho = rho + 0.5 * eps * grad
    for k in range(n_steps):
        theta = theta + eps * inv_metric * rho
        logp, grad = logp_grad(theta)
        if not math.isfinite(logp):
            return theta, rho, logp, grad
        if k + 1 < n_steps:
            rho = rho + eps * grad
    rho = rho + 0.5 * eps * grad
    return theta, rho, logp, grad


def _initial_step_size(theta, logp, grad, inv_metric, logp_grad, rng) -> float:
    """Double or halve a unit step until one-step acceptance crosses 0.8."""
    eps = 1.0
    rho = rng.standard_normal(theta.shape) / np.sqrt(inv_metric)
    h0 = -logp + 0.5 * np.dot(rho * inv_metric, rho)

    def delta_h(eps):
        _, r1, lp1, _ = _leapfrog(theta, rho, grad, eps, inv_metric, 1, logp_grad)
        if not math.isfinite(lp1):
            return -math.inf
        return h0 - (-lp1 + 0.5 * np.dot(r1 * inv_metric, r1))

    direction = 1 if delta_h(eps) > math.log(0.8) else -1
    for _ in range(100):
        eps_new = eps * (2.0 ** direction)
        dh = delta_h(eps_new)
        if direction == 1 and not dh > math.log(0.8):
            break
        if direction == -1 and dh > math.log(0.8):
            eps = eps_new
            break
        eps = eps_new
    return eps


def run_chain(
    logp_grad: LogpGrad,
    theta0: np.ndarray,
    config: SamplerConfig,
    rng: np.random.Generator,
) -> ChainResult:
    """Run one chain from ``theta0`` on an unconstrained target."""
    theta = np.array(theta0, dtype=float)
    dim = theta.size
    logp, grad = logp_grad(theta)
    if not (math.isfinite(logp) and np.all(np.isfinite(grad))):
        raise NonFiniteDensity("log density or gradient is not finite at initialization")

    inv_metric = np.ones(dim)
    eps = _initial_step_size(theta, logp, grad, inv_metric, logp_grad, rng)
    da = DualAveraging(eps, config.target_accept)
    warmup = config.warmup_iters if config.adapt else 0
    init_buffer, window_ends = adaptation_windows(warmup) if warmup else (0, [])
    welford = _Welford(dim)

    n_total = warmup + config.sampling_iters
    draws = np.empty((config.sampling_iters, dim))
    accept = np.empty(config.sampling_iters)
    divergent = np.zeros(config.sampling_iters, dtype=bool)
    warm_div = 0

    for it in range(n_total):
        n_steps = int(rng.integers(1, config.max_steps + 1))
        rho = rng.standard_normal(dim) / np.sqrt(inv_metric)
        h0 = -logp + 0.5 * np.dot(rho * inv_metric, rho)
        theta1, rho1, logp1, grad1 = _leapfrog(
            theta, rho, grad, eps, inv_metric, n_steps, logp_grad
        )
        h1 = -logp1 + 0.5 * np.dot(rho1 * inv_metric, rho1)
        u = rng.random()
        if not math.isfinite(h1) or h1 - h0 > MAX_ENERGY_ERROR:
            alpha, is_div = 0.0, True
        else:
            alpha, is_div = min(1.0, math.exp(h0 - h1)), False
        if u < alpha:
            theta, logp, grad = theta1, logp1, grad1

        if it < warmup:
            warm_div += is_div
            eps = da.update(alpha)
            if window_ends and init_buffer <= it < window_ends[-1]:
                welford.add(theta)
                if it + 1 in window_ends:
                    inv_metric = welford.regularised_variance()
                    welford = _Welford(dim)
                    eps = _initial_step_size(theta, logp, grad, inv_metric, logp_grad, rng)
                    da.restart(eps)
            if it + 1 == warmup:
                eps = da.final_step_size
        else:
            k = it - warmup
            draws[k] = theta
            accept[k] = alpha
            divergent[k] = is_div

    return ChainResult(
        draws=draws,
        accept_stat=accept,
        divergent=divergent,
        step_size=eps,
        inv_metric=inv_metric,
        warmup_divergences=warm_div,
    )


def chain_rng(seed: int, chain: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, chain]))


@dataclass
class PosteriorTrace:
    """Constrained draws, chains stacked in chain order."""

    names: list[str]
    draws: np.ndarray  # [chains * sampling_iters x dim]
    chain: np.ndarray
    accept_stat: np.ndarray = field(default_factory=lambda: np.empty(0))
    divergent: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=bool))
    step_sizes: list[float] = field(default_factory=list)

    @property
    def n_chains(self) -> int:
        return int(self.chain.max()) + 1 if self.chain.size else 0

    def column(self, name: str) -> np.ndarray:
        return self.draws[:, self.names.index(name)]

    def by_chain(self, name: str) -> np.ndarray:
        """[chains x draws] view of one parameter."""
        col = self.column(name)
        return col.reshape(self.n_chains, -1)

    @property
    def divergence_rate(self) -> float:
        return float(self.divergent.mean()) if self.divergent.size else 0.0

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["chain"] + list(self.names))
            for c, row in zip(self.chain, self.draws):
                writer.writerow([int(c)] + [repr(float(v)) for v in row])

    @classmethod
    def read_csv(cls, path: str | Path) -> "PosteriorTrace":
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [list(map(float, r)) for r in reader]
        arr = np.array(rows, dtype=float).reshape(len(rows), len(header))
        return cls(names=header[1:], draws=arr[:, 1:], chain=arr[:, 0].astype(int))


def parameter_names(data: PreparedDataset) -> list[str]:
    names = ["m"]
    for cid in data.climbers:
        names += [f"grade[{cid},{p}]" for p in range(1, data.n_pages + 1)]
    return names


def initial_point(post: Posterior, config: SamplerConfig, rng: np.random.Generator) -> np.ndarray:
    """Grades at the prior mean plus small jitter; ``m`` at its prior mean."""
    cfg = post.config
    n_grades = post.shape[0] * post.shape[1]
    grades = cfg.grade_prior_mean + config.init_jitter * rng.standard_normal(n_grades)
    if post.fixed_m is not None:
        return grades
    return np.concatenate(([math.log(cfg.m_prior_mean)], grades))


def _chain_task(args):
    data, model_config, sampler_config, chain = args
    post = Posterior(data, model_config)
    rng = chain_rng(sampler_config.seed, chain)
    theta0 = initial_point(post, sampler_config, rng)
    return run_chain(post.logp_and_grad, theta0, sampler_config, rng)


def sample_target(
    logp_grad: LogpGrad,
    init: Callable[[np.random.Generator], np.ndarray],
    config: SamplerConfig,
) -> list[ChainResult]:
    """Sample an arbitrary unconstrained target; returns one result per chain."""
    results = []
    for chain in range(config.chains):
        rng = chain_rng(config.seed, chain)
        results.append(run_chain(logp_grad, init(rng), config, rng))
    return results


def sample(
    data: PreparedDataset,
    model_config: ModelConfig | None = None,
    sampler_config: SamplerConfig | None = None,
) -> PosteriorTrace:
    """Draw from the grade-scale posterior for ``data``."""
    model_config = model_config or ModelConfig()
    sampler_config = sampler_config or SamplerConfig()
    tasks = [(data, model_config, sampler_config, c) for c in range(sampler_config.chains)]
    if sampler_config.threads > 1 and sampler_config.chains > 1:
        with ProcessPoolExecutor(max_workers=sampler_config.threads) as pool:
            results = list(pool.map(_chain_task, tasks))
    else:
        results = [_chain_task(t) for t in tasks]
    post = Posterior(data, model_config)
    return assemble_trace(results, post, parameter_names(data))


def assemble_trace(
    results: Sequence[ChainResult], post: Posterior, names: list[str]
) -> PosteriorTrace:
    blocks = []
    for res in results:
        block = np.empty((res.draws.shape[0], len(names)))
        if post.fixed_m is None:
            block[:, 0] = np.exp(res.draws[:, 0])
            block[:, 1:] = res.draws[:, 1:]
        else:
            block[:, 0] = post.fixed_m
            block[:, 1:] = res.draws
        blocks.append(block)
    trace = PosteriorTrace(
        names=names,
        draws=np.vstack(blocks),
        chain=np.repeat(np.arange(len(results)), [r.draws.shape[0] for r in results]),
        accept_stat=np.concatenate([r.accept_stat for r in results]),
        divergent=np.concatenate([r.divergent for r in results]),
        step_sizes=[r.step_size for r in results],
    )
    if trace.divergence_rate > 0.1:
        warnings.warn(
            f"{trace.divergence_rate:.1%} of post-warm-up transitions diverged",
            DivergenceStorm,
            stacklevel=3,
        )
    logger.info(
        "sampled %d chains; step sizes %s; mean accept %.3f",
        len(results), ", ".join(f"{s:.3g}" for s in trace.step_sizes), trace.accept_stat.mean(),
    )
    return trace
