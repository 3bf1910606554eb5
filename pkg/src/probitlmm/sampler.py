"""Two-block Gibbs and Haar PX-DA samplers for the probit mixed model.

Each iteration first draws, from the current eta = (beta, u), the block
precisions tau_j ~ Gamma(a_j + q_j/2, rate b_j + |u_j|^2/2) and the latent
Gaussians v_i, truncated to the half-line dictated by y_i, and then draws
eta from the Gaussian conditional N(Sigma^{-1} W'v, Sigma^{-1}) at the new
(v, tau). The parameter-expanded variant inserts a group-action rescale
between the two steps: g^2 ~ Gamma(n/2, rate v'Mv/2) with the residual
form matrix M = I - W Sigma^{-1} W', then v <- g v.

A chain is strictly sequential; every draw consumes the chain's own
numpy Generator, so a (config, seed) pair fixes the output bit for bit.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.special import ndtri

from .linalg import PosteriorPrecision, build_precision
from .model import ProbitMixedModel

logger = logging.getLogger(__name__)

#: below this squared norm a zero-b block is treated as sitting on the
#: measure-zero set where its conditional is undefined; the draw falls
#: back to Gamma(1, 1)
NULLSET_EPS = 1e-300

#: squared-form threshold under which the rescale step is skipped (g = 1)
DEGENERATE_FORM_EPS = 1e-12

# naive accept-reject is used while the acceptance region keeps probability
# >= 0.3, i.e. for standardized lower bounds up to the 0.7 normal quantile
_ALPHA_CUT = float(ndtri(0.7))


class RefusedRunError(RuntimeError):
    """Chain start refused because geometric ergodicity is not established."""


def _std_normal_lower_tail(alpha: float, rng) -> float:
    """Draw T ~ N(0,1) conditioned on T > alpha.

    Plain rejection from the normal while the acceptance probability is at
    least 0.3; beyond that, translated-exponential rejection with rate
    (alpha + sqrt(alpha^2 + 4))/2, which keeps the expected number of
    proposals bounded for arbitrarily deep truncation.
    """
    if alpha <= _ALPHA_CUT:
        while True:
            t = rng.standard_normal()
            if t > alpha:
                return t
    lam = 0.5 * (alpha + math.sqrt(alpha * alpha + 4.0))
    while True:
        z = alpha + rng.standard_exponential() / lam
        d = z - lam
        if rng.random() <= math.exp(-0.5 * d * d):
            return z


def draw_truncated_normal(mu: float, sigma: float, side: str, rng) -> float:
    """One draw from Normal(mu, sigma^2) restricted to (0, inf) when
    side='positive' or to (-inf, 0] when side='nonpositive'.

    The sign of the result is guaranteed exactly, not up to tolerance.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if side == "positive":
        while True:
            x = mu + sigma * _std_normal_lower_tail(-mu / sigma, rng)
            if x > 0.0:  # guard against roundoff at the boundary
                return x
    elif side == "nonpositive":
        while True:
            x = -mu + sigma * _std_normal_lower_tail(mu / sigma, rng)
            if x > 0.0:
                return -x
    else:
        raise ValueError("side must be 'positive' or 'nonpositive'")


def draw_gamma(shape: float, rate: float, rng) -> float:
    """Gamma draw in the shape/rate parametrization (mean shape/rate);
    shapes below one are required when a_j < 0 and supported."""
    if shape <= 0 or rate <= 0:
        raise ValueError(f"shape and rate must be positive, got {shape:g}, {rate:g}")
    return float(rng.gamma(shape, 1.0 / rate))


def draw_eta(pp: PosteriorPrecision, model: ProbitMixedModel, v, rng) -> np.ndarray:
    """Draw eta ~ N(Sigma^{-1} W'v, Sigma^{-1}) via the Cholesky factor
    Sigma = L L': the mean comes from two triangular solves of W'v and the
    fluctuation from solving L'x = z for standard normal z."""
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("v must be finite")
    try:
        c, low = cho_factor(pp.sigma, lower=True)
    except np.linalg.LinAlgError as exc:  # impossible for tau > 0; guarded
        raise ValueError("posterior precision is not positive definite") from exc
    mean = cho_solve((c, low), model.W.T @ v)
    z = rng.standard_normal(mean.size)
    return mean + solve_triangular(c, z, lower=True, trans="T")


@dataclass(frozen=True)
class ChainState:
    """Current (eta, v, tau) with the iteration counter."""

    eta: np.ndarray
    v: np.ndarray
    tau: np.ndarray
    iteration: int = 0

    def __post_init__(self):
        object.__setattr__(self, "eta", np.asarray(self.eta, dtype=float))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))
        object.__setattr__(self, "tau", np.asarray(self.tau, dtype=float))
        if np.any(self.tau <= 0):
            raise ValueError("tau must stay strictly positive")


def _draw_tau(model: ProbitMixedModel, eta, rng) -> np.ndarray:
    a, b = model.prior.a, model.prior.b
    u = eta[model.p:]
    tau = np.empty(model.r)
    for j in range(model.r):
        ss = float(u[model.re.block_slice(j)] @ u[model.re.block_slice(j)])
        if b[j] == 0.0 and ss < NULLSET_EPS:
            # conditional undefined on the measure-zero set (routinely hit by
            # the zero initialization); arbitrary but fixed fallback
            logger.debug("block %d hit the zero random-effect set; "
                         "drawing its precision from Gamma(1, 1)", j + 1)
            tau[j] = draw_gamma(1.0, 1.0, rng)
        else:
            tau[j] = draw_gamma(a[j] + model.re.q[j] / 2.0, b[j] + ss / 2.0, rng)
    return tau


def _draw_v(model: ProbitMixedModel, eta, rng) -> np.ndarray:
    mean = model.W @ eta
    y = model.obs.y
    v = np.empty(model.n)
    for i in range(model.n):
        side = "positive" if y[i] == 1 else "nonpositive"
        v[i] = draw_truncated_normal(float(mean[i]), 1.0, side, rng)
    return v


def gibbs_step(model: ProbitMixedModel, state: ChainState, rng) -> ChainState:
    """One two-block iteration: (tau, v) from the current eta, then eta
    from the Gaussian conditional at the new (v, tau)."""
    tau = _draw_tau(model, state.eta, rng)
    v = _draw_v(model, state.eta, rng)
    pp = build_precision(model, tau)
    eta = draw_eta(pp, model, v, rng)
    return ChainState(eta=eta, v=v, tau=tau, iteration=state.iteration + 1)


def pxda_step(model: ProbitMixedModel, state: ChainState, rng) -> ChainState:
    """One parameter-expanded iteration: the Gibbs first block, the
    group-action rescale v <- g v with g^2 ~ Gamma(n/2, v'Mv/2), M the
    residual form matrix, then the
    eta draw at the rescaled v."""
    tau = _draw_tau(model, state.eta, rng)
    v = _draw_v(model, state.eta, rng)
    pp = build_precision(model, tau)
    # v'Mv = v'v - |L^{-1} W'v|^2 for Sigma = L L'
    c, _ = cho_factor(pp.sigma, lower=True)
    t = solve_triangular(c, model.W.T @ v, lower=True)
    w = float(v @ v - t @ t)
    if w < DEGENERATE_FORM_EPS:
        # measure-zero event: leave v unscaled rather than divide by ~0
        logger.warning("degenerate rescale form v'Mv = %.3e at iteration %d; "
                       "keeping g = 1", w, state.iteration + 1)
        g = 1.0
    else:
        g = math.sqrt(draw_gamma(model.n / 2.0, w / 2.0, rng))
    v = g * v
    eta = draw_eta(pp, model, v, rng)
    return ChainState(eta=eta, v=v, tau=tau, iteration=state.iteration + 1)


_STEPS = {"gibbs": gibbs_step, "pxda": pxda_step}


@dataclass(frozen=True)
class SamplerConfig:
    """Run-length, seeding and initialization settings for one chain."""

    algorithm: str = "gibbs"
    iterations: int = 2000
    burn_in: int = 500
    thin: int = 1
    seed: int = 0
    init_eta: object = "zero"  # "zero" or an explicit vector

    def __post_init__(self):
        if self.algorithm not in _STEPS:
            raise ValueError(f"algorithm must be one of {sorted(_STEPS)}")
        if self.iterations < 1 or not 0 <= self.burn_in < self.iterations:
            raise ValueError("need 0 <= burn_in < iterations")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.seed is None:
            raise ValueError("seed is mandatory")

    def to_dict(self):
        init = self.init_eta
        if isinstance(init, np.ndarray):
            init = init.tolist()
        return {"algorithm": self.algorithm, "iterations": self.iterations,
                "burn_in": self.burn_in, "thin": self.thin,
                "seed": int(self.seed), "init_eta": init}


@dataclass(frozen=True)
class ChainOutput:
    """Retained post-burn-in draws of (eta, tau) plus run metadata."""

    draws: np.ndarray
    column_labels: tuple
    config: SamplerConfig
    elapsed_seconds: float

    @property
    def retained(self) -> int:
        return self.draws.shape[0]

    def column(self, label: str) -> np.ndarray:
        return self.draws[:, self.column_labels.index(label)]

    def metadata(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "retained": self.retained,
            "elapsed_seconds": self.elapsed_seconds,
            "column_labels": list(self.column_labels),
        }

    def to_csv(self, path) -> None:
        """Write the draws as comma-separated text, one labeled column per
        parameter; %.17g keeps float64 values exact and reproducible."""
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            np.savetxt(fh, self.draws, fmt="%.17g", delimiter=",",
                       header=",".join(self.column_labels), comments="")


def chain_column_labels(model: ProbitMixedModel) -> tuple:
    labels = [f"beta_{i}" for i in range(model.p)]
    for j in range(model.r):
        labels.extend(f"u_{j + 1}_{k + 1}" for k in range(int(model.re.q[j])))
    labels.extend(f"tau_{j + 1}" for j in range(model.r))
    return tuple(labels)


def run_chain(model: ProbitMixedModel, config: SamplerConfig,
              force: bool = False) -> ChainOutput:
    """Run one chain and retain every thin-th post-burn-in (eta, tau) draw.

    Unless force is set, the run is refused when the geometric-ergodicity
    check does not certify the chain, since the error estimates downstream
    rely on it.
    """
    if not force:
        from .conditions import check_geometric_ergodicity

        report = check_geometric_ergodicity(model)
        if not report.geometric:
            raise RefusedRunError(
                "geometric ergodicity not established for this model; "
                "pass force=True to sample anyway")

    step = _STEPS[config.algorithm]
    rng = np.random.default_rng(config.seed)

    if isinstance(config.init_eta, str) and config.init_eta == "zero":
        eta0 = np.zeros(model.p + model.q)
    else:
        eta0 = np.asarray(config.init_eta, dtype=float)
        if eta0.shape != (model.p + model.q,):
            raise ValueError(f"init_eta must have length {model.p + model.q}")

    start = time.perf_counter()
    # warm populate (v, tau) from the initial eta so the state is complete
    # before the first recorded iteration
    tau0 = _draw_tau(model, eta0, rng)
    v0 = _draw_v(model, eta0, rng)
    state = ChainState(eta=eta0, v=v0, tau=tau0, iteration=0)

    retained = (config.iterations - config.burn_in) // config.thin
    draws = np.empty((retained, model.p + model.q + model.r))
    row = 0
    for m in range(1, config.iterations + 1):
        state = step(model, state, rng)
        if not np.all(np.isfinite(state.eta)):
            raise FloatingPointError(f"non-finite chain state at iteration {m}")
        if m > config.burn_in and (m - config.burn_in) % config.thin == 0:
            draws[row, :model.p + model.q] = state.eta
            draws[row, model.p + model.q:] = state.tau
            row += 1
    elapsed = time.perf_counter() - start

    return ChainOutput(draws=draws, column_labels=chain_column_labels(model),
                       config=config, elapsed_seconds=elapsed)
