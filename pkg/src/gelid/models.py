"""Segment categorization: logistic regression, random forest, and a one
hidden-layer feed-forward network over the five segment labels.

All three are trained from scratch on dense feature matrices, seeded and
deterministic. Losses and gradients for the differentiable models live in
standalone functions so finite-difference checks can exercise exactly the
code the optimizer runs.
"""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

log = logging.getLogger(__name__)

MODEL_SCHEMA_VERSION = 1


class IssueLabel(enum.Enum):
    NON_INFORMATIVE = "NonInformative"
    LOGIC = "Logic"
    PRESENTATION = "Presentation"
    BALANCE = "Balance"
    PERFORMANCE = "Performance"


LABEL_ORDER = tuple(label.value for label in IssueLabel)
N_LABELS = len(LABEL_ORDER)

KIND_LOGISTIC = "logistic_regression"
KIND_FOREST = "random_forest"
KIND_FFN = "feedforward_net"
MODEL_KINDS = (KIND_LOGISTIC, KIND_FOREST, KIND_FFN)

DEFAULT_HYPER = {
    KIND_LOGISTIC: {"l2": 1e-4, "iterations": 500, "learning_rate": 0.1},
    KIND_FOREST: {"n_trees": 100, "min_leaf": 2, "max_depth": None},
    KIND_FFN: {"hidden": 64, "epochs": 50, "batch_size": 32,
               "learning_rate": 0.01},
}


@dataclass
class TrainedModel:
    kind: str
    feature_names: tuple[str, ...]
    label_order: tuple[str, ...]
    mean: np.ndarray          # standardization, from training data
    std: np.ndarray
    hyper: dict
    parameters: dict = field(repr=False, default_factory=dict)


def _label_indices(y) -> np.ndarray:
    index = {name: i for i, name in enumerate(LABEL_ORDER)}
    try:
        return np.array([index[v.value if isinstance(v, IssueLabel) else v]
                         for v in y], dtype=np.int64)
    except KeyError as exc:
        raise DataError(f"unknown label {exc.args[0]!r}; expected one of "
                        f"{LABEL_ORDER}") from None


def _standardize_fit(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std[std == 0] = 1.0
    return mean, std


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# Logistic regression (multinomial softmax, L2, full-batch gradient descent)


def logistic_loss_and_grad(wb: np.ndarray, x: np.ndarray, y_idx: np.ndarray,
                           l2: float) -> tuple[float, np.ndarray]:
    """Mean cross-entropy + l2*||W||^2 (bias unpenalized) and its gradient.

    wb is (d+1, K): weight rows then a final bias row; x is unaugmented.
    """
    n = x.shape[0]
    w, b = wb[:-1], wb[-1]
    probs = _softmax(x @ w + b)
    ll = -np.log(probs[np.arange(n), y_idx] + 1e-300).mean()
    loss = ll + l2 * float((w ** 2).sum())
    delta = probs.copy()
    delta[np.arange(n), y_idx] -= 1.0
    delta /= n
    grad = np.vstack([x.T @ delta + 2 * l2 * w, delta.sum(axis=0)])
    return float(loss), grad


def _train_logistic(x: np.ndarray, y_idx: np.ndarray, hyper: dict,
                    seed: int) -> dict:
    d = x.shape[1]
    wb = np.zeros((d + 1, N_LABELS))
    lr = hyper["learning_rate"]
    for _ in range(hyper["iterations"]):
        _, grad = logistic_loss_and_grad(wb, x, y_idx, hyper["l2"])
        wb -= lr * grad
    return {"weights": wb[:-1], "bias": wb[-1]}


# ---------------------------------------------------------------------------
# Feed-forward network (one hidden ReLU layer, softmax, mini-batch SGD)


def ffn_shapes(d: int, hidden: int) -> list[tuple[int, ...]]:
    return [(d, hidden), (hidden,), (hidden, N_LABELS), (N_LABELS,)]


def ffn_pack(params: list[np.ndarray]) -> np.ndarray:
    return np.concatenate([p.ravel() for p in params])


def ffn_unpack(flat: np.ndarray, shapes: list[tuple[int, ...]]
               ) -> list[np.ndarray]:
    out = []
    pos = 0
    for shape in shapes:
        size = int(np.prod(shape))
        out.append(flat[pos:pos + size].reshape(shape))
        pos += size
    return out


def ffn_loss_and_grad(flat: np.ndarray, shapes: list[tuple[int, ...]],
                      x: np.ndarray, y_idx: np.ndarray
                      ) -> tuple[float, np.ndarray]:
    """Mean cross-entropy of the one-hidden-layer ReLU net and its gradient."""
    w1, b1, w2, b2 = ffn_unpack(flat, shapes)
    n = x.shape[0]
    pre = x @ w1 + b1
    hidden = np.maximum(pre, 0.0)
    probs = _softmax(hidden @ w2 + b2)
    loss = -np.log(probs[np.arange(n), y_idx] + 1e-300).mean()
    delta = probs.copy()
    delta[np.arange(n), y_idx] -= 1.0
    delta /= n
    g_w2 = hidden.T @ delta
    g_b2 = delta.sum(axis=0)
    back = (delta @ w2.T) * (pre > 0)
    g_w1 = x.T @ back
    g_b1 = back.sum(axis=0)
    return float(loss), ffn_pack([g_w1, g_b1, g_w2, g_b2])


def _train_ffn(x: np.ndarray, y_idx: np.ndarray, hyper: dict,
               seed: int) -> dict:
    rng = np.random.default_rng(seed)
    d, h = x.shape[1], hyper["hidden"]
    shapes = ffn_shapes(d, h)
    params = [rng.normal(0.0, math.sqrt(2.0 / d), size=(d, h)),
              np.zeros(h),
              rng.normal(0.0, math.sqrt(2.0 / h), size=(h, N_LABELS)),
              np.zeros(N_LABELS)]
    flat = ffn_pack(params)
    n = x.shape[0]
    batch = min(hyper["batch_size"], n)
    lr = hyper["learning_rate"]
    for _ in range(hyper["epochs"]):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            rows = order[start:start + batch]
            _, grad = ffn_loss_and_grad(flat, shapes, x[rows], y_idx[rows])
            flat -= lr * grad
    w1, b1, w2, b2 = ffn_unpack(flat, shapes)
    return {"w1": w1, "b1": b1, "w2": w2, "b2": b2}


# ---------------------------------------------------------------------------
# Random forest (Gini, bootstrap rows, sqrt(d) features per split)


def _gini(counts: np.ndarray) -> float:
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts / total
    return float(1.0 - (p ** 2).sum())


def _leaf(y_idx: np.ndarray) -> dict:
    dist = np.bincount(y_idx, minlength=N_LABELS).astype(float)
    return {"leaf": (dist / dist.sum()).tolist()}


def _grow_tree(x: np.ndarray, y_idx: np.ndarray, rng: np.random.Generator,
               min_leaf: int, max_depth: int | None, depth: int = 0) -> dict:
    n, d = x.shape
    counts = np.bincount(y_idx, minlength=N_LABELS)
    if (n < min_leaf or np.count_nonzero(counts) <= 1
            or (max_depth is not None and depth >= max_depth)):
        return _leaf(y_idx)
    n_candidates = max(1, math.isqrt(d) + (0 if math.isqrt(d) ** 2 == d else 1))
    features = rng.choice(d, size=min(n_candidates, d), replace=False)
    parent_gini = _gini(counts)
    best = None  # (gain, feature, threshold)
    for f in sorted(features.tolist()):
        values = np.unique(x[:, f])
        if values.size < 2:
            continue
        thresholds = (values[:-1] + values[1:]) / 2.0
        for threshold in thresholds:
            mask = x[:, f] <= threshold
            n_left = int(mask.sum())
            if n_left == 0 or n_left == n:
                continue
            left = np.bincount(y_idx[mask], minlength=N_LABELS)
            right = counts - left
            weighted = (n_left * _gini(left)
                        + (n - n_left) * _gini(right)) / n
            gain = parent_gini - weighted
            if best is None or gain > best[0] + 1e-15:
                best = (gain, f, float(threshold))
    if best is None or best[0] <= 1e-15:
        return _leaf(y_idx)
    _, f, threshold = best
    mask = x[:, f] <= threshold
    return {
        "feature": int(f),
        "threshold": threshold,
        "left": _grow_tree(x[mask], y_idx[mask], rng, min_leaf, max_depth,
                           depth + 1),
        "right": _grow_tree(x[~mask], y_idx[~mask], rng, min_leaf, max_depth,
                            depth + 1),
    }


def _train_forest(x: np.ndarray, y_idx: np.ndarray, hyper: dict,
                  seed: int) -> dict:
    n = x.shape[0]
    trees = []
    for child in np.random.SeedSequence(seed).spawn(hyper["n_trees"]):
        rng = np.random.default_rng(child)
        rows = rng.integers(0, n, size=n)
        trees.append(_grow_tree(x[rows], y_idx[rows], rng,
                                hyper["min_leaf"], hyper["max_depth"]))
    return {"trees": trees}


def _tree_predict(node: dict, row: np.ndarray) -> np.ndarray:
    while "leaf" not in node:
        node = (node["left"] if row[node["feature"]] <= node["threshold"]
                else node["right"])
    return np.asarray(node["leaf"])


# ---------------------------------------------------------------------------
# Public API


def train(kind: str, x: np.ndarray, y, hyper: dict | None = None,
          seed: int = 0, feature_names=None) -> TrainedModel:
    """Train one of the three model kinds on a dense (n, d) matrix."""
    if kind not in MODEL_KINDS:
        raise DataError(f"unknown model kind {kind!r}; expected {MODEL_KINDS}")
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise DataError("training matrix must be (n, d) with n >= 1")
    if not np.all(np.isfinite(x)):
        raise DataError("training matrix contains NaN or Inf")
    y_idx = _label_indices(y)
    if y_idx.shape[0] != x.shape[0]:
        raise DataError("one label per training row required")
    if np.unique(y_idx).size < 2:
        raise DataError("training data must contain at least 2 classes")
    merged = dict(DEFAULT_HYPER[kind])
    unknown = set(hyper or {}) - set(merged)
    if unknown:
        raise DataError(f"unknown hyper-parameter(s) for {kind}: "
                        f"{sorted(unknown)}")
    merged.update(hyper or {})
    mean, std = _standardize_fit(x)
    xs = (x - mean) / std
    if kind == KIND_LOGISTIC:
        parameters = _train_logistic(xs, y_idx, merged, seed)
    elif kind == KIND_FFN:
        parameters = _train_ffn(xs, y_idx, merged, seed)
    else:
        parameters = _train_forest(xs, y_idx, merged, seed)
    names = (tuple(feature_names) if feature_names is not None
             else tuple(f"f{i}" for i in range(x.shape[1])))
    if len(names) != x.shape[1]:
        raise DataError(f"{len(names)} feature names for {x.shape[1]} columns")
    return TrainedModel(kind=kind, feature_names=names,
                        label_order=LABEL_ORDER, mean=mean, std=std,
                        hyper=merged, parameters=parameters)


def predict_proba(model: TrainedModel, x: np.ndarray,
                  feature_names=None) -> np.ndarray:
    """Per-class probabilities, rows summing to 1."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if feature_names is not None and tuple(feature_names) != model.feature_names:
        raise DataError("feature names do not match the trained model")
    if x.shape[1] != len(model.feature_names):
        raise DataError(f"expected {len(model.feature_names)} features, "
                        f"got {x.shape[1]}")
    xs = (x - model.mean) / model.std
    if model.kind == KIND_LOGISTIC:
        return _softmax(xs @ model.parameters["weights"]
                        + model.parameters["bias"])
    if model.kind == KIND_FFN:
        p = model.parameters
        hidden = np.maximum(xs @ p["w1"] + p["b1"], 0.0)
        return _softmax(hidden @ p["w2"] + p["b2"])
    votes = np.zeros((xs.shape[0], N_LABELS))
    for tree in model.parameters["trees"]:
        for i, row in enumerate(xs):
            votes[i] += _tree_predict(tree, row)
    return votes / len(model.parameters["trees"])


def predict(model: TrainedModel, x: np.ndarray,
            feature_names=None) -> list[str]:
    """Argmax labels; ties resolve to the earliest label in label_order."""
    probs = predict_proba(model, x, feature_names)
    return [model.label_order[i] for i in probs.argmax(axis=1)]


@dataclass
class EvaluationReport:
    accuracy: float
    precision: dict[str, float]
    recall: dict[str, float]
    auc: dict[str, float | None]
    zero_denominator: dict[str, bool]
    confusion: np.ndarray  # counts[true][predicted]


def _rank_auc(scores: np.ndarray, positives: np.ndarray) -> float | None:
    """One-vs-rest AUC as a rank statistic, ties by midranks."""
    n_pos = int(positives.sum())
    n_neg = positives.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.size)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2 + 1
        i = j + 1
    u = ranks[positives].sum() - n_pos * (n_pos + 1) / 2
    return float(u / (n_pos * n_neg))


def evaluate(model: TrainedModel, x: np.ndarray, y) -> EvaluationReport:
    """Accuracy, per-class precision/recall and one-vs-rest AUC."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[0] == 0:
        raise DataError("evaluation set is empty")
    y_idx = _label_indices(y)
    probs = predict_proba(model, x)
    predicted = probs.argmax(axis=1)
    confusion = np.zeros((N_LABELS, N_LABELS), dtype=np.int64)
    np.add.at(confusion, (y_idx, predicted), 1)
    accuracy = float((predicted == y_idx).mean())
    precision, recall, auc, flags = {}, {}, {}, {}
    for c, name in enumerate(LABEL_ORDER):
        tp = int(confusion[c, c])
        fp = int(confusion[:, c].sum()) - tp
        fn = int(confusion[c, :].sum()) - tp
        flags[name] = (tp + fp) == 0
        precision[name] = tp / (tp + fp) if tp + fp else 0.0
        recall[name] = tp / (tp + fn) if tp + fn else 0.0
        auc[name] = _rank_auc(probs[:, c], y_idx == c)
    return EvaluationReport(accuracy=accuracy, precision=precision,
                            recall=recall, auc=auc, zero_denominator=flags,
                            confusion=confusion)


# ---------------------------------------------------------------------------
# Serialization


def model_to_json(model: TrainedModel) -> str:
    payload = {
        "schema_version": MODEL_SCHEMA_VERSION,
        "kind": model.kind,
        "feature_names": list(model.feature_names),
        "label_order": list(model.label_order),
        "standardization": {"mean": model.mean.tolist(),
                            "std": model.std.tolist()},
        "hyper": model.hyper,
        "parameters": {
            k: (v.tolist() if isinstance(v, np.ndarray) else v)
            for k, v in model.parameters.items()
        },
    }
    return json.dumps(payload, sort_keys=True)


def model_from_json(text: str) -> TrainedModel:
    obj = json.loads(text)
    version = obj.get("schema_version")
    if version != MODEL_SCHEMA_VERSION:
        raise DataError(f"unsupported model schema_version {version!r}; "
                        f"this build reads version {MODEL_SCHEMA_VERSION}")
    kind = obj["kind"]
    if kind not in MODEL_KINDS:
        raise DataError(f"unknown model kind {kind!r}")
    params = obj["parameters"]
    if kind == KIND_LOGISTIC:
        parameters = {"weights": np.array(params["weights"]),
                      "bias": np.array(params["bias"])}
    elif kind == KIND_FFN:
        parameters = {k: np.array(params[k]) for k in ("w1", "b1", "w2", "b2")}
    else:
        parameters = {"trees": params["trees"]}
    return TrainedModel(
        kind=kind,
        feature_names=tuple(obj["feature_names"]),
        label_order=tuple(obj["label_order"]),
        mean=np.array(obj["standardization"]["mean"]),
        std=np.array(obj["standardization"]["std"]),
        hyper=obj["hyper"],
        parameters=parameters,
    )
