"""Losses, Adam with decoupled weight decay, splits, and train/eval loops.

Node-level tasks train transductively on one graph with seeded split masks;
graph-level tasks iterate mini-batches of graphs, each carrying its own
augmented graph and cached masks.  The checkpoint returned is the one at the
best validation metric.  A non-finite loss aborts with epoch/step context
rather than being clamped.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ops
from .autograd import Tensor, scratch_tape
from .graphs import Graph, augment
from .masks import build_head_masks
from .model import (Model, copy_parameter_values, forward, named_parameters,
                    predict_graph, predict_node, readout, set_parameter_values)


class TrainingAbort(RuntimeError):
    """Raised when training hits a non-finite loss."""

    def __init__(self, epoch: int, step: int, message: str):
        super().__init__(f"{message} (epoch {epoch}, step {step})")
        self.epoch = epoch
        self.step = step


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    epochs: int
    weight_decay: float = 0.0
    batch_size: int = 32
    seed: int = 0
    early_stop_patience: int = 50
    train_frac: float = 0.6
    val_frac: float = 0.2
    test_frac: float = 0.2

    def __post_init__(self):
        # lr = 0 and epochs = 0 are legal no-op configurations
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be non-negative, got {self.learning_rate}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be non-negative, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be positive, got {self.batch_size}")
        total = self.train_frac + self.val_frac + self.test_frac
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {total}")


@dataclass
class RunHistory:
    train_loss: list[float] = field(default_factory=list)
    val_metric: list[float] = field(default_factory=list)
    test_metric: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    best_epoch: int | None = None

    def __len__(self) -> int:
        return len(self.train_loss)

    def to_csv(self, fh) -> None:
        fh.write("epoch,train_loss,val_metric,test_metric,seconds\n")
        for e in range(len(self.train_loss)):
            fh.write(f"{e},{self.train_loss[e]!r},{self.val_metric[e]!r},"
                     f"{self.test_metric[e]!r},{self.seconds[e]!r}\n")


# ---------------------------------------------------------------------------
# Losses (fused tape primitives)


def cross_entropy(logits: Tensor, labels: np.ndarray, mask=None) -> Tensor:
    """Mean negative log-softmax of the true class over selected rows."""
    lv = logits.values
    n, c = lv.shape
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.shape[0] != n:
        raise ValueError(f"{labels.shape[0]} labels for {n} rows")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        bad = labels[(labels < 0) | (labels >= c)][0]
        raise ValueError(f"label {bad} out of range [0, {c})")
    if mask is None:
        sel = np.arange(n)
    else:
        mask = np.asarray(mask)
        sel = np.flatnonzero(mask) if mask.dtype == bool else mask.astype(np.int64)
    if sel.size == 0:
        raise ValueError("cross_entropy mask selects no rows")
    shifted = lv - lv.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_z
    out = Tensor([[-log_p[sel, labels[sel]].mean()]])

    def bwd():
        if out.grad is None:
            return
        probs = np.exp(log_p[sel])
        probs[np.arange(sel.size), labels[sel]] -= 1.0
        g = np.zeros_like(lv)
        g[sel] = probs * (out.grad[0, 0] / sel.size)
        logits._accum(g)

    ops.record(bwd)
    return out


def mae(pred: Tensor, target: np.ndarray) -> Tensor:
    """Mean absolute error; subgradient 0 at exact ties."""
    target = np.asarray(target, dtype=np.float64).reshape(pred.values.shape[0], -1)
    if target.shape != pred.values.shape:
        raise ValueError(f"pred shape {pred.values.shape} vs target shape {target.shape}")
    diff = pred.values - target
    out = Tensor([[np.abs(diff).mean()]])

    def bwd():
        if out.grad is None:
            return
        pred._accum(np.sign(diff) * (out.grad[0, 0] / diff.size))

    ops.record(bwd)
    return out


# ---------------------------------------------------------------------------
# Optimizer


def init_adam_state(params: dict[str, Tensor]) -> dict:
    return {
        "t": 0,
        "m": {k: np.zeros_like(p.values) for k, p in params.items()},
        "v": {k: np.zeros_like(p.values) for k, p in params.items()},
    }


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: dict,
              lr: float, betas=(0.9, 0.999), eps: float = 1e-8,
              weight_decay: float = 0.0) -> None:
    """One Adam step with decoupled weight decay; missing grads mean zero."""
    b1, b2 = betas
    state["t"] += 1
    t = state["t"]
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.values)
        m = state["m"][name] = b1 * state["m"][name] + (1.0 - b1) * g
        v = state["v"][name] = b2 * state["v"][name] + (1.0 - b2) * (g * g)
        update = (m / c1) / (np.sqrt(v / c2) + eps)
        p.values = p.values - lr * weight_decay * p.values - lr * update


def zero_grads(params: dict[str, Tensor]) -> None:
    for p in params.values():
        p.grad = None


def collect_grads(params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    return {k: p.grad for k, p in params.items() if p.grad is not None}


# ---------------------------------------------------------------------------
# Splits and evaluation


def split_indices(n: int, cfg: TrainConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Seeded random split of range(n) into train/val/test index arrays."""
    perm = np.random.default_rng([cfg.seed, 17]).permutation(n)
    n_train = int(round(cfg.train_frac * n))
    n_val = int(round(cfg.val_frac * n))
    return perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:]


def evaluate(model: Model, dataset, masks, split) -> float:
    """Accuracy (argmax, ties to the lowest class) or MAE over the split.

    The split is treated as a set: indices are sorted internally so shuffled
    splits produce bit-identical aggregates.
    """
    split = np.sort(np.asarray(split, dtype=np.int64))
    if split.size == 0:
        raise ValueError("evaluate called with an empty split")
    task = model.cfg.task
    with scratch_tape():
        if task == "node_classification":
            g = dataset
            if g.node_labels is None:
                raise ValueError("node classification requires node_labels")
            h = forward(model, g, augment(g), masks)
            logits = predict_node(model, h, g.num_nodes).values
            pred = logits[split].argmax(axis=1)
            return float((pred == g.node_labels[split]).mean())
        preds = []
        for i in split:
            g = dataset[int(i)]
            ag = augment(g)
            h = forward(model, g, ag, masks[int(i)])
            out = predict_graph(model, readout(h, model.cfg.readout)).values
            preds.append(out[0])
        preds = np.asarray(preds)
        labels = np.asarray([dataset[int(i)].graph_label for i in split])
        if task == "graph_classification":
            return float((preds.argmax(axis=1) == labels.astype(np.int64)).mean())
        return float(np.abs(preds[:, 0] - labels.astype(np.float64)).mean())


# ---------------------------------------------------------------------------
# Training loops


def _better(task: str, candidate: float, incumbent: float | None) -> bool:
    if incumbent is None:
        return True
    if task == "graph_regression":
        return candidate < incumbent
    return candidate > incumbent


def _ties(candidate: float, incumbent: float | None) -> bool:
    return incumbent is not None and candidate == incumbent


def train(model: Model, dataset, masks, cfg: TrainConfig) -> tuple[Model, RunHistory]:
    """Train in place and return (model at best validation epoch, history).

    Node tasks: ``dataset`` is one labelled Graph and ``masks`` its head
    masks.  Graph tasks: ``dataset`` is a list of Graphs and ``masks`` a
    parallel list of per-graph head-mask lists.
    """
    task = model.cfg.task
    params = named_parameters(model)
    state = init_adam_state(params)
    history = RunHistory()
    best_val: float | None = None
    best_loss: float | None = None
    best_params = copy_parameter_values(model)
    since_best = 0

    if task == "node_classification":
        if not isinstance(dataset, Graph):
            raise ValueError("node classification trains on a single Graph")
        if dataset.node_labels is None:
            raise ValueError("node classification requires node_labels")
        ag = augment(dataset)
        idx_train, idx_val, idx_test = split_indices(dataset.num_nodes, cfg)
    else:
        if isinstance(dataset, Graph):
            raise ValueError("graph-level tasks train on a list of Graphs")
        ags = [augment(g) for g in dataset]
        idx_train, idx_val, idx_test = split_indices(len(dataset), cfg)

    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        if task == "node_classification":
            zero_grads(params)
            h = forward(model, dataset, ag, masks, training=True,
                        rng_seed=cfg.seed * 100003 + epoch)
            logits = predict_node(model, h, dataset.num_nodes)
            loss = cross_entropy(logits, dataset.node_labels, idx_train)
            loss_value = float(loss.values[0, 0])
            if not np.isfinite(loss_value):
                raise TrainingAbort(epoch, 0, "non-finite training loss")
            ops.backward(loss)
            adam_step(params, collect_grads(params), state, cfg.learning_rate,
                      weight_decay=cfg.weight_decay)
        else:
            order = np.random.default_rng([cfg.seed, 29, epoch]).permutation(idx_train)
            loss_value = 0.0
            for step, lo in enumerate(range(0, order.size, cfg.batch_size)):
                batch = order[lo:lo + cfg.batch_size]
                zero_grads(params)
                loss = _graph_batch_loss(model, dataset, ags, masks, batch,
                                         epoch_seed=cfg.seed * 100003 + epoch)
                lv = float(loss.values[0, 0])
                if not np.isfinite(lv):
                    raise TrainingAbort(epoch, step, "non-finite training loss")
                loss_value += lv * batch.size
                ops.backward(loss)
                adam_step(params, collect_grads(params), state, cfg.learning_rate,
                          weight_decay=cfg.weight_decay)
            loss_value /= max(order.size, 1)

        val = evaluate(model, dataset, masks, idx_val)
        test = evaluate(model, dataset, masks, idx_test)
        history.train_loss.append(loss_value)
        history.val_metric.append(val)
        history.test_metric.append(test)
        history.seconds.append(time.perf_counter() - t0)

        # checkpoint at best val; ties go to the lower training loss so a
        # saturated val metric still tracks the converged model
        if _better(task, val, best_val):
            best_val = val
            best_loss = loss_value
            best_params = copy_parameter_values(model)
            history.best_epoch = epoch
            since_best = 0
        else:
            if _ties(val, best_val) and loss_value < best_loss:
                best_loss = loss_value
                best_params = copy_parameter_values(model)
                history.best_epoch = epoch
            since_best += 1
            if since_best > cfg.early_stop_patience:
                break

    set_parameter_values(model, best_params)
    return model, history


def _graph_batch_loss(model: Model, dataset, ags, masks, batch: np.ndarray,
                      epoch_seed: int) -> Tensor:
    losses = []
    preds = []
    targets = []
    for i in batch:
        i = int(i)
        g = dataset[i]
        h = forward(model, g, ags[i], masks[i], training=True, rng_seed=epoch_seed + i)
        out = predict_graph(model, readout(h, model.cfg.readout))
        if model.cfg.task == "graph_classification":
            losses.append(cross_entropy(out, np.asarray([g.graph_label])))
        else:
            preds.append(out)
            targets.append(float(g.graph_label))
    if model.cfg.task == "graph_classification":
        total = losses[0]
        for extra in losses[1:]:
            total = ops.add(total, extra)
        return ops.scale(total, 1.0 / len(losses))
    return mae(ops.concat_rows(preds), np.asarray(targets))


def prepare_graph(g: Graph, hops) -> tuple:
    """Convenience: augment a graph and build its head masks once."""
    ag = augment(g)
    return ag, build_head_masks(ag, list(hops))
