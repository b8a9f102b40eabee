"""Training loop: mini-batch Adam on BCE + alpha * fairness + L2.

The fairness term compares group-conditional samples of either the
prediction probabilities or the final hidden activations, with the
conditioning chosen by ``mode`` (dp: whole batch, eo: positives only,
eodd: both label slices summed).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import divergence as dv
from .data import Dataset, batches
from .errors import GroupMissingError, InvalidArgumentError
from .kernels import BandwidthMode, KernelSpec
from .metrics import EvalInput, evaluate_all, joint_group_ids
from .model import MlpParams, backward, bce_loss, forward, init_mlp, l2_penalty

REGULARIZERS = (
    "none",
    "cs",
    "mmd",
    "hsic",
    "dp_gap",
    "eo_gap",
    "eodd_gap",
    "pr",
    "kl",
    "dcov",
)
MODES = ("dp", "eo", "eodd")
TARGETS = ("prediction", "hidden")
MULTI_ATTR = ("single", "sum_per_attribute", "joint_groups")

# estimators acting on scalar predictions only
_SCALAR_ONLY = {"dp_gap", "eo_gap", "eodd_gap", "kl", "pr"}
# two-sample estimators (split the batch by group) vs dependence estimators
_TWO_SAMPLE = {"cs", "mmd", "dp_gap", "eo_gap", "eodd_gap", "kl"}
# minimum samples per compared side before the term is skipped
_MIN_SIDE = {"kl": 2}


@dataclass(frozen=True)
class TrainConfig:
    regularizer: str = "none"
    mode: str = "dp"
    # "auto" resolves to "hidden" for mmd (which conventionally acts on
    # representations) and "prediction" for everything else
    target: str = "auto"
    alpha: float = 0.0
    beta: float = 0.0
    lr: float = 1e-2
    epochs: int = 150
    batch_size: int = 1024
    step_size: int = 50
    gamma: float = 0.1
    lr_floor: float = 1e-5
    kernel: KernelSpec = KernelSpec()
    seed: int = 0
    multi_attr: str = "single"
    hidden_sizes: tuple[int, ...] = (32, 16)
    threshold: float = 0.5

    def __post_init__(self):
        if self.regularizer not in REGULARIZERS:
            raise InvalidArgumentError(f"unknown regularizer {self.regularizer!r}")
        if self.mode not in MODES:
            raise InvalidArgumentError(f"unknown mode {self.mode!r}")
        if self.target == "auto":
            resolved = "hidden" if self.regularizer == "mmd" else "prediction"
            object.__setattr__(self, "target", resolved)
        if self.target not in TARGETS:
            raise InvalidArgumentError(f"unknown target {self.target!r}")
        if self.multi_attr not in MULTI_ATTR:
            raise InvalidArgumentError(f"unknown multi_attr {self.multi_attr!r}")
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise InvalidArgumentError(f"{name} must be finite and >= 0")
        if not 0.0 < self.gamma <= 1.0:
            raise InvalidArgumentError("gamma must be in (0, 1]")
        if not self.lr > 0:
            raise InvalidArgumentError("lr must be positive")
        if self.regularizer in _SCALAR_ONLY and self.target == "hidden":
            raise InvalidArgumentError(
                f"regularizer {self.regularizer!r} is defined on prediction "
                "probabilities; target='hidden' is invalid"
            )
        # mean-gap regularizer names imply their conditioning when the
        # mode was left at the default
        if self.regularizer == "eo_gap" and self.mode == "dp":
            object.__setattr__(self, "mode", "eo")
        if self.regularizer == "eodd_gap" and self.mode == "dp":
            object.__setattr__(self, "mode", "eodd")

    def echo(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, KernelSpec):
                out["kernel_family"] = v.family.value
                out["kernel_bandwidth"] = (
                    "median"
                    if v.bandwidth_mode is BandwidthMode.MEDIAN_HEURISTIC
                    else v.bandwidth
                )
            elif isinstance(v, tuple):
                out[f.name] = list(v)
            else:
                out[f.name] = v
        return out


@dataclass
class RunResult:
    config: dict
    history: list[dict]
    metrics: dict
    seconds: float

    def to_record(self) -> dict:
        return {
            "schema_version": 1,
            "config": self.config,
            "history": self.history,
            "metrics": self.metrics,
            "seconds": self.seconds,
        }


def fairness_batch_loss(
    config: TrainConfig,
    z: np.ndarray,
    hidden: np.ndarray,
    y: np.ndarray,
    s: np.ndarray,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Fairness term of one batch: (value, d value/d z, d value/d hidden).

    Conditioning subsets with an empty or undersized required side
    contribute zero (the skip rule); gradients then stay exactly the ERM
    gradients.
    """
    z = np.asarray(z, dtype=float).ravel()
    hidden = np.asarray(hidden, dtype=float)
    y = np.asarray(y).ravel().astype(int)
    s = np.asarray(s)
    if s.ndim == 1:
        s = s[:, None]
    n = z.size
    dz = np.zeros(n)
    dhidden = np.zeros_like(hidden)
    if config.regularizer == "none" or n == 0:
        return 0.0, dz, dhidden

    target = z[:, None] if config.target == "prediction" else hidden

    if config.multi_attr == "joint_groups":
        group_columns = [joint_group_ids(s)]
        joint = True
    elif config.multi_attr == "sum_per_attribute":
        group_columns = [s[:, k] for k in range(s.shape[1])]
        joint = False
    else:
        group_columns = [s[:, 0]]
        joint = False

    if config.mode == "dp":
        subsets = [np.arange(n)]
    elif config.mode == "eo":
        subsets = [np.flatnonzero(y == 1)]
    else:  # eodd: sum both label-conditional terms
        subsets = [np.flatnonzero(y == 0), np.flatnonzero(y == 1)]

    total = 0.0
    for g in group_columns:
        for rows in subsets:
            value = _subset_loss(config, target, z, g, rows, joint, dz, dhidden)
            total += value
    return total, dz, dhidden


def _subset_loss(config, target, z, g, rows, joint, dz, dhidden) -> float:
    if rows.size == 0:
        return 0.0
    sub_t = target[rows]
    sub_g = np.asarray(g)[rows]
    reg = config.regularizer
    spec = config.kernel.resolved(sub_t) if reg in ("cs", "mmd", "hsic") else config.kernel

    if reg in _TWO_SAMPLE:
        values = np.unique(sub_g)
        if joint:
            pairs = [(a, b) for i, a in enumerate(values) for b in values[i + 1 :]]
        else:
            pairs = [(0, 1)]
        best = None
        min_side = _MIN_SIDE.get(reg, 1)
        for a, b in pairs:
            ia = rows[sub_g == a]
            ib = rows[sub_g == b]
            if ia.size < min_side or ib.size < min_side:
                continue
            res = _two_sample(reg, target[ia], target[ib], spec)
            if best is None or res.value > best[0].value:
                best = (res, ia, ib)
        if best is None:
            return 0.0
        if joint and len(pairs) > 1:
            res, ia, ib = best  # max pairwise loss
        else:
            res, ia, ib = best
        _inject(config, dz, dhidden, ia, res.grad_p)
        _inject(config, dz, dhidden, ib, res.grad_q)
        return res.value

    # dependence estimators over the whole conditioning subset
    if np.unique(sub_g).size < 2 or rows.size < 2:
        return 0.0
    if reg == "pr":
        try:
            res = dv.pr_mutual_information(z[rows], sub_g)
        except GroupMissingError:
            return 0.0
        dz[rows] += res.grad_p[:, 0]
        return res.value
    s_mat = sub_g.astype(float)[:, None]
    if reg == "hsic":
        res = dv.hsic(sub_t, s_mat, spec, spec.resolved(s_mat))
    else:  # dcov
        res = dv.distance_covariance(sub_t, s_mat)
    _inject(config, dz, dhidden, rows, res.grad_p)
    return res.value


def _two_sample(reg, P, Q, spec) -> dv.DivergenceResult:
    if reg == "cs":
        return dv.cs_divergence(P, Q, spec)
    if reg == "mmd":
        return dv.mmd_squared(P, Q, spec)
    if reg == "kl":
        return dv.kl_gaussian_moment(P, Q)
    return dv.mean_disparity(P, Q)


def _inject(config, dz, dhidden, idx, grad):
    if config.target == "prediction":
        dz[idx] += grad[:, 0]
    else:
        dhidden[idx] += grad


class _Adam:
    def __init__(self, params: MlpParams, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m_w = [np.zeros_like(w) for w in params.weights]
        self.v_w = [np.zeros_like(w) for w in params.weights]
        self.m_b = [np.zeros_like(b) for b in params.biases]
        self.v_b = [np.zeros_like(b) for b in params.biases]

    def step(self, params: MlpParams, grads_w, grads_b, lr: float):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for i in range(len(params.weights)):
            for p, g, m, v in (
                (params.weights[i], grads_w[i], self.m_w[i], self.v_w[i]),
                (params.biases[i], grads_b[i], self.m_b[i], self.v_b[i]),
            ):
                m *= self.beta1
                m += (1.0 - self.beta1) * g
                v *= self.beta2
                v += (1.0 - self.beta2) * g**2
                p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def learning_rate(config: TrainConfig, epoch: int) -> float:
    return config.lr * config.gamma ** (epoch // config.step_size)


def train(config: TrainConfig, train_set: Dataset, test_set: Dataset) -> RunResult:
    """Run one full training and evaluate the metric suite on the test set."""
    if train_set.X.shape[1] != test_set.X.shape[1]:
        raise InvalidArgumentError("train/test feature dimensions differ")
    t0 = time.perf_counter()
    params = init_mlp(config.hidden_sizes, train_set.X.shape[1], config.seed)
    adam = _Adam(params)
    history = []
    for epoch in range(config.epochs):
        lr = learning_rate(config, epoch)
        if lr < config.lr_floor:
            break
        bce_sum = fair_sum = 0.0
        n_batches = 0
        for idx in batches(train_set.n, config.batch_size, config.seed, epoch):
            Xb, yb, sb = train_set.X[idx], train_set.y[idx], train_set.S[idx]
            cache = forward(params, Xb)
            bce_value, dbce_dz = bce_loss(cache.probs, yb)
            fair_value, dfair_dz, dfair_dh = fairness_batch_loss(
                config, cache.probs, cache.final_hidden, yb, sb
            )
            l2_value, l2_w, l2_b = l2_penalty(params, config.beta)
            total = bce_value + config.alpha * fair_value + l2_value
            if not np.isfinite(total):
                for name, v in (
                    ("bce", bce_value),
                    ("fairness", fair_value),
                    ("l2", l2_value),
                ):
                    if not np.isfinite(v):
                        raise RuntimeError(
                            f"NaN/inf in {name} term at epoch {epoch}"
                        )
            dz = dbce_dz + config.alpha * dfair_dz
            dh = config.alpha * dfair_dh if config.target == "hidden" else None
            grads_w, grads_b = backward(params, cache, dz, dh)
            for i in range(len(grads_w)):
                grads_w[i] += l2_w[i]
                grads_b[i] += l2_b[i]
            adam.step(params, grads_w, grads_b, lr)
            bce_sum += bce_value
            fair_sum += fair_value
            n_batches += 1
        history.append(
            {
                "epoch": epoch,
                "lr": lr,
                "train_bce": bce_sum / n_batches,
                "train_fairness": fair_sum / n_batches,
            }
        )
    z_test = forward(params, test_set.X).probs
    metrics = evaluate_all(
        EvalInput(z_test, test_set.y, test_set.S, threshold=config.threshold)
    )
    seconds = time.perf_counter() - t0
    result = RunResult(config.echo(), history, metrics, seconds)
    result.params = params  # sidecar for checkpointing by the CLI
    return result


@dataclass
class SweepCell:
    alpha: float
    beta: float
    seed: int
    status: str
    result: RunResult | None = None
    error: str = ""


def _run_cell(args) -> SweepCell:
    base, alpha, beta, seed, train_set, test_set = args
    try:
        config = replace(base, alpha=alpha, beta=beta, seed=seed)
        result = train(config, train_set, test_set)
        return SweepCell(alpha, beta, seed, "ok", result)
    except Exception as exc:  # failed cells must not abort the sweep
        return SweepCell(alpha, beta, seed, "error", None, str(exc))


def sweep(
    base: TrainConfig,
    alphas: list[float],
    betas: list[float],
    seeds: list[int],
    train_set: Dataset,
    test_set: Dataset,
    jobs: int = 1,
) -> list[SweepCell]:
    """One independent training per (alpha, beta, seed) grid cell."""
    if not alphas or not betas or not seeds:
        raise InvalidArgumentError("sweep grids must be non-empty")
    cells = [
        (base, a, b, sd, train_set, test_set)
        for a in alphas
        for b in betas
        for sd in seeds
    ]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_cell, cells))
    return [_run_cell(c) for c in cells]
