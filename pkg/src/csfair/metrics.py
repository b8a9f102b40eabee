"""Utility and group-fairness evaluation suite.

Metrics operate on prediction probabilities ``z``, labels ``y`` and one
or more integer sensitive columns ``s``.  Metrics whose conditioning
cell is empty return ``nan`` (the missing-value marker), except the
intersectional metrics which count an empty group's rate as 0.0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

MISSING = float("nan")


@dataclass
class EvalInput:
    z: np.ndarray
    y: np.ndarray
    s: np.ndarray  # (N, K) integer group columns
    threshold: float = 0.5

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float).ravel()
        self.y = np.asarray(self.y).ravel().astype(int)
        s = np.asarray(self.s)
        if s.ndim == 1:
            s = s[:, None]
        self.s = s.astype(int)
        n = self.z.size
        if self.y.size != n or self.s.shape[0] != n:
            raise InvalidArgumentError("z, y, s must have matching lengths")
        if not 0.0 < self.threshold < 1.0:
            raise InvalidArgumentError("threshold must be in (0, 1)")

    @property
    def yhat(self) -> np.ndarray:
        return (self.z > self.threshold).astype(int)

    def group(self, column: int = 0) -> np.ndarray:
        return self.s[:, column]


def _rate(mask: np.ndarray, values: np.ndarray) -> float:
    if mask.sum() == 0:
        return MISSING
    return float(values[mask].mean())


def delta_dp(inp: EvalInput, column: int = 0) -> float:
    """Absolute gap in positive-prediction rates between groups 0 and 1."""
    g = inp.group(column)
    r0 = _rate(g == 0, inp.yhat)
    r1 = _rate(g == 1, inp.yhat)
    return abs(r0 - r1)


def delta_eo(inp: EvalInput, column: int = 0) -> float:
    """Absolute true-positive-rate gap between groups."""
    g = inp.group(column)
    r0 = _rate((g == 0) & (inp.y == 1), inp.yhat)
    r1 = _rate((g == 1) & (inp.y == 1), inp.yhat)
    return abs(r0 - r1)


def delta_eodd(inp: EvalInput, column: int = 0) -> float:
    """Max over y of the conditional positive-rate gap between groups."""
    g = inp.group(column)
    gaps = []
    for y in (0, 1):
        r0 = _rate((g == 0) & (inp.y == y), inp.yhat)
        r1 = _rate((g == 1) & (inp.y == y), inp.yhat)
        gaps.append(abs(r0 - r1))
    if any(np.isnan(gap) for gap in gaps):
        return MISSING
    return max(gaps)


def accuracy(inp: EvalInput) -> float:
    if inp.z.size == 0:
        raise InvalidArgumentError("empty input")
    return float((inp.yhat == inp.y).mean())


def auc(inp: EvalInput) -> float:
    """Mann-Whitney AUC with half credit for tied pairs."""
    pos = inp.z[inp.y == 1]
    neg = inp.z[inp.y == 0]
    if pos.size == 0 or neg.size == 0:
        return MISSING
    order = np.argsort(np.concatenate([pos, neg]), kind="mergesort")
    ranks = _tied_ranks(np.concatenate([pos, neg])[order])
    inv = np.empty_like(order)
    inv[order] = np.arange(order.size)
    pos_ranks = ranks[inv[: pos.size]]
    u = pos_ranks.sum() - pos.size * (pos.size + 1) / 2.0
    return float(u / (pos.size * neg.size))


def _tied_ranks(sorted_vals: np.ndarray) -> np.ndarray:
    n = sorted_vals.size
    ranks = np.arange(1, n + 1, dtype=float)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        if j > i:
            ranks[i : j + 1] = ranks[i : j + 1].mean()
        i = j + 1
    return ranks


def ppv_gap(inp: EvalInput, column: int = 0) -> float:
    """Gap in P(Y=1 | Yhat=1) between groups."""
    g = inp.group(column)
    r0 = _rate((g == 0) & (inp.yhat == 1), inp.y)
    r1 = _rate((g == 1) & (inp.yhat == 1), inp.y)
    return abs(r0 - r1)


def prule(inp: EvalInput, column: int = 0) -> float:
    """p%-rule score: 100 * min of the two positive-rate ratios."""
    g = inp.group(column)
    r0 = _rate(g == 0, inp.yhat)
    r1 = _rate(g == 1, inp.yhat)
    if np.isnan(r0) or np.isnan(r1) or r0 == 0 or r1 == 0:
        return MISSING
    return 100.0 * min(r0 / r1, r1 / r0)


def bfp_gap(inp: EvalInput, column: int = 0) -> float:
    """Gap in mean predicted probability on the positive class."""
    g = inp.group(column)
    r0 = _rate((g == 0) & (inp.y == 1), inp.z)
    r1 = _rate((g == 1) & (inp.y == 1), inp.z)
    return abs(r0 - r1)


def bfn_gap(inp: EvalInput, column: int = 0) -> float:
    """Gap in mean predicted probability on the negative class."""
    g = inp.group(column)
    r0 = _rate((g == 0) & (inp.y == 0), inp.z)
    r1 = _rate((g == 1) & (inp.y == 0), inp.z)
    return abs(r0 - r1)


def abcc(inp: EvalInput, column: int = 0) -> float:
    """Area between the group-wise empirical CDFs of z over [0, 1].

    Exact partition sum over the merged breakpoints; both CDFs are step
    functions so the integrand is piecewise constant.
    """
    g = inp.group(column)
    z0 = np.sort(inp.z[g == 0])
    z1 = np.sort(inp.z[g == 1])
    if z0.size == 0 or z1.size == 0:
        return MISSING
    pts = np.unique(np.concatenate([[0.0], z0, z1, [1.0]]))
    pts = pts[(pts >= 0.0) & (pts <= 1.0)]
    area = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        f0 = np.searchsorted(z0, lo, side="right") / z0.size
        f1 = np.searchsorted(z1, lo, side="right") / z1.size
        area += abs(f0 - f1) * (hi - lo)
    return float(area)


def intersectional_metrics(z, y, s_joint) -> dict:
    """Max-min DP/EO gaps and worst-group accuracy over joint group ids.

    Empty groups count a 0.0 rate (not a missing value), so the gaps are
    always defined once at least one group is non-empty.
    """
    z = np.asarray(z, dtype=float).ravel()
    y = np.asarray(y).ravel().astype(int)
    s_joint = np.asarray(s_joint).ravel().astype(int)
    if z.size == 0:
        raise InvalidArgumentError("empty input")
    yhat = (z > 0.5).astype(int)
    groups = range(int(s_joint.max()) + 1)

    def per_group(mask_fn, values):
        out = {}
        for g in groups:
            mask = mask_fn(g)
            out[g] = float(values[mask].mean()) if mask.sum() > 0 else 0.0
        return out

    rates = per_group(lambda g: s_joint == g, yhat)
    tprs = per_group(lambda g: (s_joint == g) & (y == 1), yhat)
    accs = per_group(lambda g: s_joint == g, (yhat == y).astype(float))
    return {
        "dp_gap_inter": max(rates.values()) - min(rates.values()),
        "eo_gap_inter": max(tprs.values()) - min(tprs.values()),
        "worst_group_acc": min(accs.values()),
    }


def joint_group_ids(s: np.ndarray) -> np.ndarray:
    """Cross-product encoding of multiple sensitive columns into one id."""
    s = np.asarray(s).astype(int)
    if s.ndim == 1:
        return s
    ids = np.zeros(s.shape[0], dtype=int)
    for k in range(s.shape[1]):
        ids = ids * (int(s[:, k].max()) + 1) + s[:, k]
    return ids


def evaluate_all(inp: EvalInput) -> dict:
    """Full metric record for one sensitive column (plus intersectional
    gaps when more than one column is present)."""
    out = {
        "accuracy": accuracy(inp),
        "auc": auc(inp),
        "dp": delta_dp(inp),
        "eo": delta_eo(inp),
        "eodd": delta_eodd(inp),
        "ppv_gap": ppv_gap(inp),
        "prule": prule(inp),
        "bfp_gap": bfp_gap(inp),
        "bfn_gap": bfn_gap(inp),
        "abcc": abcc(inp),
    }
    if inp.s.shape[1] > 1:
        out.update(intersectional_metrics(inp.z, inp.y, joint_group_ids(inp.s)))
    return out
