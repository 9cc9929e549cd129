"""Guided cross-attention loss: a scalar head mix feeding a cross-entropy
between the mixed attention distribution and a reference alignment
distribution, with analytic gradients for the mix parameters and the
per-head attention entries, checked against central finite differences."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateInputError
from .matrices import MixWeights

PRE_SOFTMAX = "pre_softmax"
POST_SOFTMAX = "post_softmax"
_LOG_FLOOR = 1e-12


@dataclass
class LossInput:
    """One supervised example: H per-head score matrices (n_d x n_e), the
    mix parameters, and a binary alignment matrix whose rows with mass
    select the supervised decoder positions."""

    head_mats: list[np.ndarray]
    mix: MixWeights
    align: np.ndarray
    scores_are: str = PRE_SOFTMAX

    def __post_init__(self):
        self.head_mats = [np.asarray(m, dtype=np.float64) for m in self.head_mats]
        self.align = np.asarray(self.align, dtype=np.float64)
        if not self.head_mats:
            raise ValueError("at least one head matrix is required")
        shape = self.head_mats[0].shape
        for m in self.head_mats:
            if m.shape != shape:
                raise ValueError("head matrices must share one shape")
        if self.align.shape != shape:
            raise ValueError(
                f"alignment shape {self.align.shape} differs from heads {shape}"
            )
        if self.scores_are not in (PRE_SOFTMAX, POST_SOFTMAX):
            raise ValueError(f"unknown score declaration {self.scores_are!r}")


@dataclass
class LossResult:
    value: float
    d_raw: np.ndarray  # dL/da_h for every raw mix weight
    d_gamma: float
    d_att: list[np.ndarray]  # dL/datt_h, per head


def _mix_state(inp: LossInput):
    n_heads = len(inp.head_mats)
    weights = inp.mix.softmax_weights(n_heads)
    mixed = np.zeros_like(inp.head_mats[0])
    for h, s in weights.items():
        mixed += inp.mix.gamma * s * inp.head_mats[h]
    return weights, mixed


def guided_loss(inp: LossInput) -> LossResult:
    """Sum over supervised decoder positions of the cross-entropy between
    the mixed attention distribution over encoder positions and the
    normalized alignment row. Pre-softmax inputs are normalized with a
    softmax per row; post-softmax inputs are logged directly (floored)."""
    weights, mixed = _mix_state(inp)
    supervised = np.nonzero(inp.align.sum(axis=1) > 0)[0]
    if supervised.size == 0:
        raise DegenerateInputError("no supervised rows: alignment matrix is empty")

    q = inp.align[supervised]
    q = q / q.sum(axis=1, keepdims=True)
    rows = mixed[supervised]

    d_mixed = np.zeros_like(mixed)
    if inp.scores_are == PRE_SOFTMAX:
        shifted = rows - rows.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        p = e / e.sum(axis=1, keepdims=True)
        logp = shifted - np.log(e.sum(axis=1, keepdims=True))
        value = float(-(q * logp).sum())
        d_mixed[supervised] = p - q
    else:
        floored = np.maximum(rows, _LOG_FLOOR)
        value = float(-(q * np.log(floored)).sum())
        grad = np.where(rows > _LOG_FLOOR, -q / floored, 0.0)
        d_mixed[supervised] = grad

    gamma = inp.mix.gamma
    n_heads = len(inp.head_mats)
    d_att = [np.zeros_like(m) for m in inp.head_mats]
    inner = {h: float((d_mixed * inp.head_mats[h]).sum()) for h in weights}
    for h, s in weights.items():
        d_att[h] = gamma * s * d_mixed

    d_gamma = float(sum(s * inner[h] for h, s in weights.items()))
    weighted_mean = sum(weights[h] * inner[h] for h in weights)
    d_raw = np.zeros(n_heads, dtype=np.float64)
    for h, s in weights.items():
        d_raw[h] = gamma * s * (inner[h] - weighted_mean)
    return LossResult(value, d_raw, d_gamma, d_att)


def grad_check(
    inp: LossInput,
    eps: float = 1e-5,
    att_samples: int = 16,
    seed: int = 0,
) -> float:
    """Maximum relative error between the analytic gradients and central
    finite differences over every raw mix weight, gamma, and a random sample
    of per-head attention entries."""
    if not (1e-6 <= eps <= 1e-3):
        raise ValueError(f"eps {eps} outside [1e-6, 1e-3]")
    analytic = guided_loss(inp)

    def value_with(mix: MixWeights, head_mats=None) -> float:
        probe = LossInput(
            head_mats=[m.copy() for m in (head_mats or inp.head_mats)],
            mix=mix,
            align=inp.align,
            scores_are=inp.scores_are,
        )
        return guided_loss(probe).value

    def rel(a: float, n: float) -> float:
        return abs(a - n) / max(abs(a), abs(n), 1e-3)

    worst = 0.0
    n_heads = len(inp.head_mats)
    subset = set(inp.mix.subset(n_heads))
    for h in range(len(inp.mix.raw)):
        if h not in subset:
            continue
        raw_hi = list(inp.mix.raw)
        raw_lo = list(inp.mix.raw)
        raw_hi[h] += eps
        raw_lo[h] -= eps
        numeric = (
            value_with(replace(inp.mix, raw=raw_hi))
            - value_with(replace(inp.mix, raw=raw_lo))
        ) / (2 * eps)
        worst = max(worst, rel(analytic.d_raw[h], numeric))

    numeric = (
        value_with(replace(inp.mix, gamma=inp.mix.gamma + eps))
        - value_with(replace(inp.mix, gamma=inp.mix.gamma - eps))
    ) / (2 * eps)
    worst = max(worst, rel(analytic.d_gamma, numeric))

    rng = np.random.default_rng(seed)
    n_d, n_e = inp.head_mats[0].shape
    for _ in range(att_samples):
        h = int(rng.integers(0, n_heads))
        i = int(rng.integers(0, n_d))
        j = int(rng.integers(0, n_e))
        hi = [m.copy() for m in inp.head_mats]
        lo = [m.copy() for m in inp.head_mats]
        hi[h][i, j] += eps
        lo[h][i, j] -= eps
        numeric = (
            value_with(inp.mix, head_mats=hi) - value_with(inp.mix, head_mats=lo)
        ) / (2 * eps)
        worst = max(worst, rel(analytic.d_att[h][i, j], numeric))
    return worst


def fit_mix(
    dataset: list[LossInput],
    steps: int = 500,
    lr: float = 0.1,
) -> MixWeights:
    """Plain gradient descent on the raw mix weights and gamma, minimizing
    the mean guided loss over the dataset. All inputs must agree on head
    count and subset; the result carries the learned parameters."""
    if not dataset:
        raise ValueError("empty dataset")
    n_heads = len(dataset[0].head_mats)
    mix = dataset[0].mix
    subset = mix.subset(n_heads)
    for inp in dataset:
        if len(inp.head_mats) != n_heads:
            raise ValueError("dataset inputs disagree on head count")

    raw = np.array(mix.raw, dtype=np.float64)
    gamma = float(mix.gamma)
    for _ in range(steps):
        g_raw = np.zeros_like(raw)
        g_gamma = 0.0
        for inp in dataset:
            current = MixWeights(raw=list(raw), gamma=gamma, head_subset=subset)
            res = guided_loss(replace(inp, mix=current))
            g_raw += res.d_raw
            g_gamma += res.d_gamma
        raw -= lr * g_raw / len(dataset)
        gamma -= lr * g_gamma / len(dataset)
    return MixWeights(raw=[float(x) for x in raw], gamma=gamma, head_subset=subset)


def mean_loss(dataset: list[LossInput], mix: MixWeights | None = None) -> float:
    total = 0.0
    for inp in dataset:
        probe = inp if mix is None else replace(inp, mix=mix)
        total += guided_loss(probe).value
    return total / len(dataset)
