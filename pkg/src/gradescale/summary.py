"""Trace reduction: HPD intervals, effective sample size, split R-hat."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .sampler import PosteriorTrace


class TooFewDraws(ValueError):
    pass


def _window_size(n: int, mass: float) -> int:
    # Guard against 0.95 * 100 landing a hair above 95.
    return max(1, math.ceil(mass * n - 1e-9))


def hpd_interval(draws, mass: float = 0.95, min_draws: int = 1) -> tuple[float, float]:
    """Narrowest contiguous window of sorted draws holding ``ceil(mass * n)`` of them.

    Ties go to the window with the lowest lower bound.
    """
    if not 0 < mass < 1:
        raise ValueError("mass must lie in (0, 1)")
    x = np.sort(np.asarray(draws, dtype=float).ravel())
    n = x.size
    if n < max(min_draws, 1):
        raise TooFewDraws(f"need at least {max(min_draws, 1)} draws, got {n}")
    k = _window_size(n, mass)
    widths = x[k - 1:] - x[: n - k + 1]
    i = int(np.argmin(widths))  # first minimum -> lowest lower bound
    return float(x[i]), float(x[i + k - 1])


def _autocovariance(x: np.ndarray) -> np.ndarray:
    """Biased autocovariance of a 1-D series via FFT."""
    n = x.size
    centred = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(centred, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n]
    return acov / n


def effective_sample_size(chains: np.ndarray) -> float:
    """Multi-chain ESS with Geyer's initial monotone sequence truncation.

    ``chains`` is ``[n_chains x n_draws]``. Returns NaN for a constant trace;
    the result is capped at the total number of draws.
    """
    chains = np.atleast_2d(np.asarray(chains, dtype=float))
    m, n = chains.shape
    if n < 4:
        return float("nan")
    acov = np.array([_autocovariance(c) for c in chains])
    chain_var = acov[:, 0] * n / (n - 1.0)
    within = chain_var.mean()
    var_plus = within * (n - 1.0) / n
    if m > 1:
        var_plus += chains.mean(axis=1).var(ddof=1)
    if not var_plus > 0:
        return float("nan")
    rho = 1.0 - (within - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0

    # Sum consecutive pairs while positive, forcing them to be non-increasing.
    total = 0.0
    prev = math.inf
    t = 0
    while t + 1 < n:
        pair = rho[t] + rho[t + 1]
        if pair < 0:
            break
        pair = min(pair, prev)
        total += pair
        prev = pair
        t += 2
    tau = -1.0 + 2.0 * total
    tau = max(tau, 1.0 / math.log10(m * n)) if m * n > 1 else tau
    return float(min(m * n / tau, m * n))


def split_rhat(chains: np.ndarray) -> float:
    """Potential scale reduction over half-chains; NaN when undefined."""
    chains = np.atleast_2d(np.asarray(chains, dtype=float))
    m, n = chains.shape
    half = n // 2
    if half < 2:
        return float("nan")
    halves = np.concatenate([chains[:, :half], chains[:, n - half:]], axis=0)
    within = halves.var(axis=1, ddof=1).mean()
    between = half * halves.mean(axis=1).var(ddof=1)
    if not within > 0:
        return float("nan")
    var_plus = (half - 1.0) / half * within + between / half
    return float(math.sqrt(var_plus / within))


@dataclass(frozen=True)
class Summary:
    name: str
    mean: float
    median: float
    sd: float
    hpd_lower: float
    hpd_upper: float
    ess: float
    rhat: float

    def as_dict(self) -> dict:
        return asdict(self)


def summarize_draws(name: str, chains: np.ndarray, mass: float = 0.95) -> Summary:
    chains = np.atleast_2d(np.asarray(chains, dtype=float))
    flat = chains.ravel()
    lo, hi = hpd_interval(flat, mass)
    return Summary(
        name=name,
        mean=float(flat.mean()),
        median=float(np.median(flat)),
        sd=float(flat.std(ddof=1)) if flat.size > 1 else 0.0,
        hpd_lower=lo,
        hpd_upper=hi,
        ess=effective_sample_size(chains),
        rhat=split_rhat(chains),
    )


def summarize(trace: PosteriorTrace, mass: float = 0.95) -> list[Summary]:
    """Per-parameter summaries, plus ``d = exp(m)`` summarised draw by draw."""
    if trace.draws.size == 0:
        raise ValueError("empty trace")
    out = [summarize_draws(name, trace.by_chain(name), mass) for name in trace.names]
    if "m" in trace.names:
        out.append(summarize_draws("d", np.exp(trace.by_chain("m")), mass))
    return out
