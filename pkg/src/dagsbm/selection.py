"""Regime selection with pseudopriors, and the Bayes factor between regimes.

The finite-regime pair ``(gamma, k)`` gets a log-normal ``gamma`` and a
shifted negative binomial ``k - 1``; the infinite-regime pair gets a beta
``alpha`` and a gamma ``theta + alpha``. Fits are by moment matching on
pilot chains run in each regime alone.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import betaln, gammaln

from .likelihood import PriorConfig, PyParams, log_eppf, log_gamma_density, log_prior_py

_LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


class EvidenceWarning(UserWarning):
    """A regime was never (or always) visited, so the Bayes factor is unbounded."""


@dataclass
class FinitePseudoPrior:
    """Pseudoprior for (gamma, k): log-normal gamma, ``k - 1`` negative binomial."""

    log_gamma_loc: float
    log_gamma_scale: float
    k_a: float
    k_b: float

    def sample(self, rng: np.random.Generator) -> tuple[float, int]:
        gamma = math.exp(self.log_gamma_loc + self.log_gamma_scale * rng.standard_normal())
        k = 1 + int(rng.negative_binomial(self.k_a, self.k_b))
        return gamma, k

    def logpdf_gamma(self, gamma: float) -> float:
        if gamma <= 0:
            return -math.inf
        lg, s = math.log(gamma), self.log_gamma_scale
        return -lg - math.log(s) - _LOG_SQRT_2PI - 0.5 * ((lg - self.log_gamma_loc) / s) ** 2

    def logpmf_k(self, k: int) -> float:
        if k < 1:
            return -math.inf
        x = k - 1
        a, b = self.k_a, self.k_b
        return float(gammaln(x + a) - gammaln(a) - gammaln(x + 1) + a * math.log(b) + x * math.log1p(-b))

    def logpdf(self, gamma: float, k: int) -> float:
        return self.logpdf_gamma(gamma) + self.logpmf_k(k)


@dataclass
class InfinitePseudoPrior:
    """Pseudoprior for (alpha, theta): beta alpha, gamma ``theta + alpha``."""

    alpha_a: float
    alpha_b: float
    shape: float
    rate: float

    def sample(self, rng: np.random.Generator) -> tuple[float, float]:
        alpha = float(rng.beta(self.alpha_a, self.alpha_b))
        alpha = min(alpha, np.nextafter(1.0, 0.0))
        total = float(rng.gamma(self.shape, 1.0 / self.rate))
        return alpha, total - alpha

    def logpdf(self, alpha: float, theta: float) -> float:
        if not 0.0 <= alpha < 1.0 or theta + alpha <= 0:
            return -math.inf
        a, b = self.alpha_a, self.alpha_b
        if alpha == 0.0 and a != 1.0:
            return -math.inf if a > 1.0 else math.inf
        log_beta = (a - 1.0) * math.log(alpha) if a != 1.0 else 0.0
        log_beta += (b - 1.0) * math.log1p(-alpha) - float(betaln(a, b))
        return log_beta + log_gamma_density(theta + alpha, self.shape, self.rate)


@dataclass
class PseudoPrior:
    finite: FinitePseudoPrior
    infinite: InfinitePseudoPrior

    def to_dict(self) -> dict:
        return {"finite": asdict(self.finite), "infinite": asdict(self.infinite)}

    @classmethod
    def from_dict(cls, d: dict) -> "PseudoPrior":
        return cls(FinitePseudoPrior(**d["finite"]), InfinitePseudoPrior(**d["infinite"]))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def load(cls, path) -> "PseudoPrior":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _column(trace, name: str) -> np.ndarray:
    if isinstance(trace, dict):
        col = trace[name]
    else:
        col = [getattr(r, name) for r in trace]
    col = np.asarray(col, dtype=np.float64)
    return col[np.isfinite(col)]


def _degenerate(x: np.ndarray) -> bool:
    return len(x) < 2 or not np.std(x) > 1e-12 * max(1.0, abs(np.mean(x)))


def fit_pseudopriors(pilot_finite, pilot_infinite, priors: PriorConfig | None = None) -> PseudoPrior:
    """Moment-matched pseudopriors from pilot chains.

    Each pilot is a list of trace records or a dict of arrays holding
    ``gamma``/``k`` (finite pilot) or ``alpha``/``theta`` (infinite pilot).
    Components whose pilot samples do not vary fall back to a member of the
    same family shaped like the prior, with a warning.
    """
    priors = priors or PriorConfig()
    gamma = _column(pilot_finite, "gamma")
    k = _column(pilot_finite, "k")
    alpha = _column(pilot_infinite, "alpha")
    theta = _column(pilot_infinite, "theta")
    if min(len(gamma), len(k), len(alpha), len(theta)) == 0:
        raise ValueError("pilot traces must be nonempty")

    if _degenerate(gamma):
        warnings.warn("pilot gamma samples do not vary; using prior-shaped pseudoprior", stacklevel=2)
        s2 = math.log1p(1.0 / priors.gamma_shape)
        loc = math.log(priors.gamma_shape / priors.gamma_rate) - s2 / 2
        scale = math.sqrt(s2)
    else:
        lg = np.log(gamma)
        loc, scale = float(lg.mean()), float(lg.std(ddof=1))

    x = k - 1
    if _degenerate(x):
        warnings.warn("pilot k samples do not vary; using prior-shaped pseudoprior", stacklevel=2)
        ka, kb = priors.k_a, priors.k_b
    else:
        mean, var = float(x.mean()), float(x.var(ddof=1))
        kb = float(np.clip(mean / var, 1e-6, 1 - 1e-6))
        ka = max(mean * kb / (1 - kb), 1e-6)

    if _degenerate(alpha):
        warnings.warn("pilot alpha samples do not vary; using prior-shaped pseudoprior", stacklevel=2)
        aa, ab = 1.0, 1.0
    else:
        m, v = float(alpha.mean()), float(alpha.var(ddof=1))
        common = m * (1 - m) / v - 1
        aa, ab = (m * common, (1 - m) * common) if common > 0 else (1.0, 1.0)

    total = theta + alpha[: len(theta)] if len(alpha) == len(theta) else theta
    if _degenerate(total):
        warnings.warn("pilot theta samples do not vary; using prior-shaped pseudoprior", stacklevel=2)
        shape, rate = priors.theta_shape, priors.theta_rate
    else:
        m, v = float(total.mean()), float(total.var(ddof=1))
        shape, rate = m * m / v, m / v

    return PseudoPrior(FinitePseudoPrior(loc, scale, ka, kb), InfinitePseudoPrior(aa, ab, shape, rate))


def pseudopriors_from_priors(priors: PriorConfig) -> PseudoPrior:
    """Pseudopriors matched to the priors themselves (no pilot information)."""
    s2 = math.log1p(1.0 / priors.gamma_shape)
    loc = math.log(priors.gamma_shape / priors.gamma_rate) - s2 / 2
    return PseudoPrior(
        FinitePseudoPrior(loc, math.sqrt(s2), priors.k_a, priors.k_b),
        InfinitePseudoPrior(1.0, 1.0, priors.theta_shape, priors.theta_rate),
    )


def regime_log_weights(sizes, eta0: tuple[float, float], eta1: tuple[float, float],
                       pseudo: PseudoPrior, priors: PriorConfig, p_r1: float) -> tuple[float, float]:
    """log A_0 and log A_1 for given (alpha, theta) and (gamma, k)."""
    alpha, theta = eta0
    gamma, k = eta1
    inf = PyParams.infinite(alpha, theta)
    fin = PyParams.finite(gamma, int(k))
    log_a0 = (log_eppf(sizes, inf) + log_prior_py(inf, priors)
              + pseudo.finite.logpdf(gamma, int(k)) + math.log1p(-p_r1))
    log_a1 = (log_eppf(sizes, fin) + log_prior_py(fin, priors)
              + pseudo.infinite.logpdf(alpha, theta) + math.log(p_r1))
    return log_a0, log_a1


def regime_gibbs_step(state, pseudo: PseudoPrior, p_r1: float, rng: np.random.Generator) -> float:
    """Redraw the off-regime parameters from their pseudoprior, then the regime.

    Only ``regime`` and the off-regime parameters change. Returns P(r = 1).
    """
    if not 0 < p_r1 < 1:
        raise ValueError("regime prior must lie strictly between 0 and 1")
    if state.regime == 0:
        state.gamma, state.k = pseudo.finite.sample(rng)
    else:
        state.alpha, state.theta = pseudo.infinite.sample(rng)
    log_a0, log_a1 = regime_log_weights(
        state.sizes.copy(), (state.alpha, state.theta), (state.gamma, state.k),
        pseudo, state.priors, p_r1)
    if log_a0 == -math.inf and log_a1 == -math.inf:
        raise AssertionError("both regimes have zero weight")
    p1 = math.exp(log_a1 - np.logaddexp(log_a0, log_a1))
    state.regime = int(rng.random() < p1)
    return p1


def bayes_factor(posterior_r1: float, prior_r1: float) -> float:
    """Posterior odds of the finite regime divided by its prior odds.

    A posterior proportion of exactly 0 or 1 returns 0 or ``inf`` and
    emits :class:`EvidenceWarning`.
    """
    if not 0 < prior_r1 < 1:
        raise ValueError("prior probability must lie strictly between 0 and 1")
    if not 0 <= posterior_r1 <= 1:
        raise ValueError("posterior proportion must lie in [0, 1]")
    if posterior_r1 in (0.0, 1.0):
        which = "finite" if posterior_r1 == 1.0 else "infinite"
        warnings.warn(f"the chain never left the {which} regime; Bayes factor is unbounded",
                      EvidenceWarning, stacklevel=2)
        return math.inf if posterior_r1 == 1.0 else 0.0
    return (posterior_r1 / (1 - posterior_r1)) / (prior_r1 / (1 - prior_r1))
