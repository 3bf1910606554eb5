"""Shared model builders for the test suite."""

import numpy as np
import pandas as pd

from probitlmm.model import (
    ObservationSet,
    PriorSpec,
    ProbitMixedModel,
    RandomEffectsStructure,
)


def make_model(y, X, q_blocks, a, b):
    """Assemble a model from raw pieces; q_blocks lists the block sizes and
    the indicator matrix is built from cyclic level assignment."""
    y = np.asarray(y)
    X = np.asarray(X, dtype=float)
    n = y.size
    blocks = []
    for qj in q_blocks:
        assign = np.arange(n) % qj
        Zj = np.zeros((n, qj))
        Zj[np.arange(n), assign] = 1.0
        blocks.append(Zj)
    re = RandomEffectsStructure(q=np.asarray(q_blocks), Z=np.hstack(blocks))
    return ProbitMixedModel(obs=ObservationSet(y=y, X=X), re=re,
                            prior=PriorSpec(a=np.asarray(a, dtype=float),
                                            b=np.asarray(b, dtype=float)))


def one_way_model(a=1.5, b=1.0, y=(1, 0, 1, 0)):
    """Balanced one-way layout: two groups, two observations each, intercept only."""
    X = np.ones((4, 1))
    Z = np.array([[1.0, 0], [1, 0], [0, 1], [0, 1]])
    re = RandomEffectsStructure(q=np.array([2]), Z=Z)
    return ProbitMixedModel(obs=ObservationSet(y=np.asarray(y), X=X), re=re,
                            prior=PriorSpec(a=[a], b=[b]))


def tiny_model():
    """n=4 intercept-only model with a single one-level block and a proper
    precision prior (a=1.5, b=1); small enough for the quadrature oracle."""
    X = np.ones((4, 1))
    Z = np.ones((4, 1))
    re = RandomEffectsStructure(q=np.array([1]), Z=Z)
    return ProbitMixedModel(obs=ObservationSet(y=np.array([1, 1, 0, 0]), X=X),
                            re=re, prior=PriorSpec(a=[1.5], b=[1.0]))


def crossed_table(n1, n2, y_fn=lambda i, j: (i + j) % 2):
    """Fully crossed two-factor table with response y_fn(i, j)."""
    rows = [{"y": y_fn(i, j), "f1": f"a{i}", "f2": f"b{j}"}
            for i in range(n1) for j in range(n2)]
    return pd.DataFrame(rows)


def crossed_model(n1, n2, a=(-0.5, -0.5), b=(0.0, 0.0), y_fn=lambda i, j: (i + j) % 2):
    from probitlmm.model import build_design

    prior = [{"a": a[0], "b": b[0]}, {"a": a[1], "b": b[1]}]
    return build_design(crossed_table(n1, n2, y_fn),
                        {"response": "y", "fixed": [], "factors": ["f1", "f2"],
                         "prior": prior})


def full_rank_route_model():
    """No-intercept design with full-rank W = (x, Z): passes the power-prior
    propriety conditions and the full-rank ergodicity route (e = 1 is a
    positive null vector of the signed design by construction)."""
    X = np.array([[1.0], [2.0], [4.0], [3.0]])
    Z = np.array([[1.0, 0], [1, 0], [0, 1], [0, 1]])
    re = RandomEffectsStructure(q=np.array([2]), Z=Z)
    return ProbitMixedModel(obs=ObservationSet(y=np.array([0, 1, 0, 1]), X=X),
                            re=re, prior=PriorSpec(a=[-0.5], b=[0.0]))


def random_design(rng, n_range=(8, 30), p_range=(1, 3), r_range=(1, 3),
                  q_range=(2, 5), a_value=-0.4, b_value=0.0):
    """Random intercept-plus-noise design with indicator blocks; every level
    of every factor appears via cyclic assignment before shuffling."""
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    p = int(rng.integers(p_range[0], p_range[1] + 1))
    r = int(rng.integers(r_range[0], r_range[1] + 1))
    X = np.column_stack([np.ones(n)] + [rng.standard_normal(n) for _ in range(p - 1)])
    qs, blocks = [], []
    for _ in range(r):
        qj = int(rng.integers(q_range[0], q_range[1] + 1))
        assign = np.arange(n) % qj
        rng.shuffle(assign)
        Zj = np.zeros((n, qj))
        Zj[np.arange(n), assign] = 1.0
        qs.append(qj)
        blocks.append(Zj)
    y = rng.integers(0, 2, n)
    re = RandomEffectsStructure(q=np.array(qs), Z=np.hstack(blocks))
    return ProbitMixedModel(obs=ObservationSet(y=y, X=X), re=re,
                            prior=PriorSpec(a=a_value * np.ones(r),
                                            b=b_value * np.ones(r)))


def random_tau(rng, r, lo=1e-3, hi=1e3):
    return np.exp(rng.uniform(np.log(lo), np.log(hi), r))


class ZeroNormalRng:
    """Degenerate generator whose standard normals are all zero; other
    draws delegate to a real generator."""

    def __init__(self, seed=0):
        self._rng = np.random.default_rng(seed)

    def standard_normal(self, size=None):
        return 0.0 if size is None else np.zeros(size)

    def __getattr__(self, name):
        return getattr(self._rng, name)
