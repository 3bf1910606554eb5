"""Model containers for binary-response mixed designs.

Holds the observed data (binary responses and fixed-effect design), the
block-structured random-effect indicator design, the precision-prior
hyperparameters, and the derived design matrices used everywhere else:
the response-signed design W*, and the full-rank reparametrization
(intercept absorbed into a grand level effect, remaining level effects
expressed as differences against each factor's first level).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.special import ndtr


class ModelValidationError(ValueError):
    """Raised when inputs violate the model-construction contracts."""


class ImproperPriorWarning(UserWarning):
    """A prior/design combination known to yield an improper posterior."""


def _as_2d_float(M, name):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ModelValidationError(f"{name} must be a 2-d matrix, got ndim={M.ndim}")
    return M


@dataclass(frozen=True)
class ObservationSet:
    """Binary responses y (length n) and fixed-effect design X (n x p)."""

    y: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y)
        if y.ndim != 1 or y.size < 1:
            raise ModelValidationError("y must be a nonempty vector")
        vals = np.unique(y)
        if not np.all(np.isin(vals, (0, 1))):
            raise ModelValidationError(f"responses must be 0/1, found values {vals}")
        X = _as_2d_float(self.X, "X")
        if X.shape[0] != y.size:
            raise ModelValidationError("X row count must match length of y")
        if X.shape[1] < 1:
            raise ModelValidationError("X needs at least one column")
        if np.any(np.all(X == 0.0, axis=0)):
            raise ModelValidationError("X contains an all-zero column")
        object.__setattr__(self, "y", y.astype(np.int64))
        object.__setattr__(self, "X", X)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class RandomEffectsStructure:
    """Block-partitioned 0/1 random-effect design Z = (Z_1, ..., Z_r).

    Each Z_j is a level-indicator matrix: every row has exactly one 1
    (each observation sits at exactly one level of each factor).
    block_offsets[j] is the starting column of Z_j inside Z, so that
    columns [offset_j, offset_j + q_j) extract block j.
    """

    q: np.ndarray
    Z: np.ndarray
    block_offsets: np.ndarray = field(default=None)

    def __post_init__(self):
        q = np.asarray(self.q, dtype=np.int64)
        if q.ndim != 1 or q.size < 1 or np.any(q < 1):
            raise ModelValidationError("q must be a vector of positive block sizes")
        Z = _as_2d_float(self.Z, "Z")
        if Z.shape[1] != int(q.sum()):
            raise ModelValidationError("Z column count must equal sum of block sizes")
        if not np.all(np.isin(Z, (0.0, 1.0))):
            raise ModelValidationError("Z must contain only 0/1 entries")
        offsets = np.concatenate(([0], np.cumsum(q)[:-1]))
        for j in range(q.size):
            block = Z[:, offsets[j]:offsets[j] + q[j]]
            if not np.all(block.sum(axis=1) == 1.0):
                raise ModelValidationError(
                    f"each row of block {j + 1} must have exactly one 1"
                )
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "block_offsets", offsets)

    @property
    def r(self) -> int:
        return self.q.size

    @property
    def q_total(self) -> int:
        return int(self.q.sum())

    @property
    def n(self) -> int:
        return self.Z.shape[0]

    def block_slice(self, j: int) -> slice:
        """Column slice of Z (or of u) belonging to block j (0-based)."""
        return slice(int(self.block_offsets[j]), int(self.block_offsets[j] + self.q[j]))

    def extraction_matrix(self, j: int) -> np.ndarray:
        """The q_j x q 0/1 matrix mapping u to its j-th block."""
        qj = int(self.q[j])
        off = int(self.block_offsets[j])
        R = np.zeros((qj, self.q_total))
        R[np.arange(qj), off + np.arange(qj)] = 1.0
        return R


@dataclass(frozen=True)
class PriorSpec:
    """Per-block hyperparameters of the precision prior density
    proportional to exp(-b_j * tau_j) * tau_j^(a_j - 1); may be improper."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if a.ndim != 1 or b.ndim != 1 or a.size != b.size:
            raise ModelValidationError("a and b must be vectors of equal length")
        if np.any(b < 0):
            raise ModelValidationError("b must be nonnegative")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)


@dataclass(frozen=True)
class ProbitMixedModel:
    """Complete model: observations, random-effect structure, priors,
    and the stacked design W = (X, Z)."""

    obs: ObservationSet
    re: RandomEffectsStructure
    prior: PriorSpec
    W: np.ndarray = field(default=None)
    level_names: dict = field(default=None, compare=False)

    def __post_init__(self):
        if self.re.n != self.obs.n:
            raise ModelValidationError("X, Z and y must have the same row count")
        if self.prior.a.size != self.re.r:
            raise ModelValidationError("prior length must equal the number of blocks")
        W = np.hstack([self.obs.X, self.re.Z])
        object.__setattr__(self, "W", W)

    @property
    def n(self) -> int:
        return self.obs.n

    @property
    def p(self) -> int:
        return self.obs.p

    @property
    def q(self) -> int:
        return self.re.q_total

    @property
    def r(self) -> int:
        return self.re.r

    @property
    def has_intercept(self) -> bool:
        return bool(np.all(self.obs.X[:, 0] == 1.0))


@dataclass(frozen=True)
class SignedDesign:
    """Response-signed design: row i of Wstar is c_i * w_i with
    c_i = +1 when y_i = 0 and c_i = -1 when y_i = 1."""

    c: np.ndarray
    Wstar: np.ndarray


@dataclass(frozen=True)
class TransformedDesign:
    """Full-rank reparametrized design.

    Wtilde = (X, Ztilde) where Ztilde_j is Z_j without its first column;
    the matching parameter vector is (mu0, beta_1..beta_{p-1}, d-blocks)
    with mu0 = beta_0 + sum_j u_{j1} and d_{jk} = u_{j,k+1} - u_{j1}.
    back_map is the matrix T with eta_tilde = T @ eta, so that
    W @ eta == Wtilde @ (T @ eta) for every eta.
    """

    Wtilde: np.ndarray
    Wtilde_star: np.ndarray
    param_names: tuple
    back_map: np.ndarray

    def map_eta(self, eta: np.ndarray) -> np.ndarray:
        """Map a (beta, u) vector to the reduced parameter vector."""
        eta = np.asarray(eta, dtype=float)
        if eta.shape != (self.back_map.shape[1],):
            raise ValueError(f"eta must have length {self.back_map.shape[1]}")
        return self.back_map @ eta


def signed_design(model: ProbitMixedModel) -> SignedDesign:
    """Flip row signs of W according to the responses: +row for y=0, -row for y=1."""
    c = np.where(model.obs.y == 0, 1.0, -1.0)
    return SignedDesign(c=c, Wstar=c[:, None] * model.W)


def transform_design(model: ProbitMixedModel) -> TransformedDesign:
    """Drop each factor's first level column and absorb it into the intercept.

    Requires the first column of X to be all ones. The returned design has
    p + sum(q_j - 1) columns and reproduces W @ eta exactly through back_map.
    """
    if not model.has_intercept:
        raise ModelValidationError(
            "the reduced design requires an intercept (first column of X all ones)"
        )
    X = model.obs.X
    re = model.re
    p, q, r = model.p, model.q, model.r

    zt_cols = []
    names = ["mu0"] + [f"beta_{i}" for i in range(1, p)]
    T = np.zeros((p + q - r, p + q))
    # mu0 = beta_0 + sum_j u_{j1}
    T[0, 0] = 1.0
    for j in range(r):
        T[0, p + re.block_offsets[j]] = 1.0
    # remaining fixed effects pass through
    for i in range(1, p):
        T[i, i] = 1.0
    # d_{jk} = u_{j,k+1} - u_{j1}
    row = p
    for j in range(r):
        off = int(re.block_offsets[j])
        qj = int(re.q[j])
        for k in range(1, qj):
            zt_cols.append(re.Z[:, off + k])
            T[row, p + off + k] = 1.0
            T[row, p + off] = -1.0
            names.append(f"d_{j + 1}_{k}")
            row += 1

    if zt_cols:
        Wtilde = np.column_stack([X] + zt_cols)
    else:
        Wtilde = X.copy()
    c = np.where(model.obs.y == 0, 1.0, -1.0)
    return TransformedDesign(
        Wtilde=Wtilde,
        Wtilde_star=c[:, None] * Wtilde,
        param_names=tuple(names),
        back_map=T,
    )


def build_design(table: pd.DataFrame, roles: dict) -> ProbitMixedModel:
    """Assemble a ProbitMixedModel from a labeled table and column roles.

    roles keys:
      response        name of the 0/1 response column
      fixed           list of numeric fixed-effect columns (may be empty)
      factors         list of categorical factor columns (at least one)
      prior           list of {"a": float, "b": float}, one per factor

    An intercept column of ones is always prepended to X. Factor levels are
    ordered by first appearance in the table, which fixes the meaning of the
    difference parameters d_{jk}; the ordering is exposed via level_names.
    """
    if not isinstance(table, pd.DataFrame):
        table = pd.DataFrame(table)
    if table.shape[0] == 0:
        raise ModelValidationError("table is empty")

    response = roles["response"]
    fixed = list(roles.get("fixed", []))
    factors = list(roles["factors"])
    prior_entries = list(roles["prior"])
    if len(factors) < 1:
        raise ModelValidationError("at least one factor column is required")
    if len(prior_entries) != len(factors):
        raise ModelValidationError("prior list length must equal the number of factors")
    for col in [response] + fixed + factors:
        if col not in table.columns:
            raise ModelValidationError(f"column {col!r} not found in table")

    y_raw = table[response].to_numpy()
    try:
        y = np.asarray(y_raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ModelValidationError(f"response column {response!r} is not numeric") from exc
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise ModelValidationError(
            f"response column {response!r} must contain only 0/1 values"
        )

    n = table.shape[0]
    X = np.column_stack([np.ones(n)] + [table[c].to_numpy(dtype=float) for c in fixed])

    q_list, z_blocks, level_names = [], [], {}
    for col in factors:
        labels = table[col].astype(str).to_numpy()
        levels = list(pd.unique(labels))  # first-appearance order
        level_names[col] = levels
        idx = np.array([levels.index(v) for v in labels])
        Zj = np.zeros((n, len(levels)))
        Zj[np.arange(n), idx] = 1.0
        q_list.append(len(levels))
        z_blocks.append(Zj)

    a = np.array([float(e["a"]) for e in prior_entries])
    b = np.array([float(e["b"]) for e in prior_entries])
    for j, col in enumerate(factors):
        if q_list[j] == 1 and b[j] == 0.0:
            warnings.warn(
                f"factor {col!r} has a single level and b=0: the posterior is "
                "improper for this block",
                ImproperPriorWarning,
            )

    return ProbitMixedModel(
        obs=ObservationSet(y=y, X=X),
        re=RandomEffectsStructure(q=np.array(q_list), Z=np.hstack(z_blocks)),
        prior=PriorSpec(a=a, b=b),
        level_names=level_names,
    )


def simulate_latent(X, re: RandomEffectsStructure, beta_true, tau_true, seed: int):
    """Draw random effects and responses from the generative model.

    Returns (y, u): u_j ~ Normal(0, I/tau_j), then
    y_i ~ Bernoulli(Phi(x_i'beta + z_i'u)). Deterministic given seed.
    """
    X = _as_2d_float(X, "X")
    beta_true = np.asarray(beta_true, dtype=float)
    tau_true = np.asarray(tau_true, dtype=float)
    if np.any(tau_true <= 0):
        raise ModelValidationError("tau_true must be strictly positive")
    if X.shape[0] != re.n:
        raise ModelValidationError("X and Z row counts differ")
    if beta_true.size != X.shape[1] or tau_true.size != re.r:
        raise ModelValidationError("parameter dimensions do not match the design")

    rng = np.random.default_rng(seed)
    u = rng.standard_normal(re.q_total)
    for j in range(re.r):
        u[re.block_slice(j)] /= np.sqrt(tau_true[j])
    probs = ndtr(X @ beta_true + re.Z @ u)
    y = (rng.random(re.n) < probs).astype(np.int64)
    return y, u


def simulate_data(X, re: RandomEffectsStructure, beta_true, tau_true, seed: int) -> ObservationSet:
    """Simulate binary responses for a given design; see simulate_latent."""
    y, _ = simulate_latent(X, re, beta_true, tau_true, seed)
    return ObservationSet(y=y, X=X)
