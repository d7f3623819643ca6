"""Windowed lag features and second-order gradient-boosted regression trees.

Each round fits one tree to the per-row gradients ``g`` and hessians ``h`` of
the loss at the current prediction.  Splits are found by exact greedy
enumeration over the sorted distinct values of every feature, scoring

    gain = 1/2 [G_L^2/(H_L+lambda) + G_R^2/(H_R+lambda) - G^2/(H+lambda)]

and a split is kept only when ``gain > gamma``.  Leaves take the Newton
weight ``-G/(H+lambda)``; predictions add ``eta`` times each leaf weight to
``base_score``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateLabels, MissingValues, SchemaMismatch, TooShort
from .series import Panel


# ---------------------------------------------------------------- features

@dataclass(frozen=True)
class WindowSpec:
    window: int = 7
    target_column: str = "MAG"
    task: str = "regression"
    threshold: Optional[float] = None

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.task not in ("regression", "binary"):
            raise ValueError("task must be 'regression' or 'binary'")
        if (self.threshold is not None) != (self.task == "binary"):
            raise ValueError("threshold is required for, and only for, the binary task")


@dataclass
class FeatureMatrix:
    X: np.ndarray
    names: list
    y: np.ndarray
    times: np.ndarray = None
    task: str = "regression"
    target: np.ndarray = None   # raw target values (before thresholding)

    def __len__(self):
        return self.X.shape[0]

    def rows(self, sel) -> "FeatureMatrix":
        return FeatureMatrix(self.X[sel], list(self.names), self.y[sel],
                             None if self.times is None else self.times[sel], self.task,
                             None if self.target is None else self.target[sel])


def build_features(p: Panel, spec: WindowSpec) -> FeatureMatrix:
    """Lagged-window design: for each target day t, every column's previous ``window`` values.

    Features are named ``<column>.l<j>`` and ordered column by column.
    """
    if not p.complete:
        raise MissingValues("feature construction needs a complete panel")
    T = len(p)
    w = spec.window
    if T <= w:
        raise TooShort(f"{T} rows are too few for a window of {w}")
    tj = p.col(spec.target_column)
    rows = np.arange(w, T)
    blocks, names = [], []
    for c, name in enumerate(p.names):
        for j in range(1, w + 1):
            blocks.append(p.values[rows - j, c])
            names.append(f"{name}.l{j}")
    X = np.column_stack(blocks)
    target = p.values[rows, tj].astype(float)
    y = (target >= spec.threshold).astype(float) if spec.task == "binary" else target.copy()
    return FeatureMatrix(X, names, y, p.index[rows], spec.task, target)


def default_threshold(magnitudes, quantile: float = 0.9) -> float:
    """Quantile of the nonzero magnitudes, the default high-intensity cut."""
    m = np.asarray(magnitudes, dtype=float)
    m = m[np.isfinite(m) & (m > 0)]
    if m.size == 0:
        raise DegenerateLabels("no nonzero magnitudes to derive a threshold from")
    return float(np.quantile(m, quantile))


# ---------------------------------------------------------------- model

@dataclass(frozen=True)
class BoostParams:
    rounds: int = 200
    eta: float = 0.1
    max_depth: int = 4
    min_child_weight: float = 1.0
    reg_lambda: float = 1.0
    gamma: float = 0.0
    base_score: Optional[float] = None

    def __post_init__(self):
        if self.rounds < 0:
            raise ValueError("rounds must be >= 0")
        if not 0 < self.eta <= 1:
            raise ValueError("eta must be in (0, 1]")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_child_weight < 0 or self.reg_lambda < 0 or self.gamma < 0:
            raise ValueError("min_child_weight, reg_lambda and gamma must be >= 0")


@dataclass
class Tree:
    """Flat binary tree; node 0 is the root, children ids are -1 at leaves."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    default_left: np.ndarray
    value: np.ndarray
    gain: np.ndarray
    cover: np.ndarray

    @property
    def is_leaf(self):
        return self.left < 0

    def depth(self) -> int:
        def d(i):
            return 0 if self.left[i] < 0 else 1 + max(d(self.left[i]), d(self.right[i]))
        return d(0)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf id reached by each row."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            inner = self.left[node] >= 0
            if not inner.any():
                return node
            r = rows[inner]
            nd = node[inner]
            x = X[r, self.feature[nd]]
            go_left = np.where(np.isnan(x), self.default_left[nd], x < self.threshold[nd])
            node[inner] = np.where(go_left, self.left[nd], self.right[nd])

    def predict(self, X):
        return self.value[self.apply(X)]

    def to_dict(self, names, i=0):
        if self.left[i] < 0:
            return {"nodeid": int(i), "leaf": float(self.value[i]), "cover": float(self.cover[i])}
        return {
            "nodeid": int(i), "split": names[self.feature[i]], "feature_index": int(self.feature[i]),
            "threshold": float(self.threshold[i]), "default_left": bool(self.default_left[i]),
            "gain": float(self.gain[i]), "cover": float(self.cover[i]),
            "children": [self.to_dict(names, int(self.left[i])), self.to_dict(names, int(self.right[i]))],
        }

    @classmethod
    def from_dict(cls, d, names):
        nodes = {}

        def walk(n):
            nodes[n["nodeid"]] = n
            for c in n.get("children", []):
                walk(c)
        walk(d)
        size = max(nodes) + 1
        t = cls(np.zeros(size, np.int64), np.zeros(size), -np.ones(size, np.int64),
                -np.ones(size, np.int64), np.ones(size, bool), np.zeros(size), np.zeros(size),
                np.zeros(size))
        for i, n in nodes.items():
            t.cover[i] = n["cover"]
            if "leaf" in n:
                t.value[i] = n["leaf"]
            else:
                t.feature[i] = names.index(n["split"])
                t.threshold[i] = n["threshold"]
                t.default_left[i] = n["default_left"]
                t.gain[i] = n["gain"]
                t.left[i], t.right[i] = n["children"][0]["nodeid"], n["children"][1]["nodeid"]
        return t


@dataclass
class BoostedModel:
    task: str
    params: BoostParams
    trees: list
    feature_names: list
    base_score: float
    train_loss: list = field(default_factory=list)

    def raw_score(self, X: np.ndarray) -> np.ndarray:
        out = np.full(X.shape[0], self.base_score, dtype=float)
        for t in self.trees:
            out += self.params.eta * t.predict(X)
        return out

    def to_dict(self):
        return {
            "schema_version": 1, "task": self.task, "params": asdict(self.params),
            "base_score": self.base_score, "feature_names": list(self.feature_names),
            "trees": [t.to_dict(self.feature_names) for t in self.trees],
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_dict(cls, d):
        names = list(d["feature_names"])
        return cls(d["task"], BoostParams(**d["params"]), [Tree.from_dict(t, names) for t in d["trees"]],
                   names, float(d["base_score"]))


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def training_loss(task, y, raw) -> float:
    """Mean squared error, or mean logistic loss on raw scores."""
    if task == "regression":
        return float(np.mean((raw - y) ** 2))
    # log(1 + e^z) - y z, computed stably
    return float(np.mean(np.logaddexp(0.0, raw) - y * raw))


def _grad_hess(task, y, raw):
    if task == "regression":
        return raw - y, np.ones_like(y)
    p = _sigmoid(raw)
    return p - y, p * (1.0 - p)


class _Builder:
    def __init__(self, X, order, params):
        self.X = X
        self.XT = np.ascontiguousarray(X.T)
        self.order = order          # (F, n) row ids sorted by each feature
        self.p = params
        self.nodes = []

    def _new(self):
        self.nodes.append({"feature": 0, "threshold": 0.0, "left": -1, "right": -1,
                           "value": 0.0, "gain": 0.0, "cover": 0.0})
        return len(self.nodes) - 1

    def _best_split(self, idx, g, h):
        lam, mcw = self.p.reg_lambda, self.p.min_child_weight
        xs = np.take_along_axis(self.XT, idx, axis=1)
        gs, hs = g[idx], h[idx]
        GL = np.cumsum(gs, axis=1)[:, :-1]
        HL = np.cumsum(hs, axis=1)[:, :-1]
        G = gs.sum(axis=1, keepdims=True)
        H = hs.sum(axis=1, keepdims=True)
        GR, HR = G - GL, H - HL
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = 0.5 * (GL ** 2 / (HL + lam) + GR ** 2 / (HR + lam) - G ** 2 / (H + lam))
        valid = (xs[:, :-1] < xs[:, 1:]) & (HL >= mcw) & (HR >= mcw) & np.isfinite(gain)
        if not valid.any():
            return None
        gain = np.where(valid, gain, -np.inf)
        flat = int(np.argmax(gain))          # first maximum: lowest feature, then lowest threshold
        f, pos = divmod(flat, gain.shape[1])
        lo, hi = xs[f, pos], xs[f, pos + 1]
        thr = 0.5 * (lo + hi)
        if not lo < thr <= hi:
            thr = hi
        return float(gain[f, pos]), f, thr

    def grow(self, idx, g, h, depth, leaf_of):
        """Grow the subtree for the rows ``idx[0]`` (``idx`` holds them sorted per feature)."""
        node = self._new()
        rows = idx[0]
        G, H = float(g[rows].sum()), float(h[rows].sum())
        self.nodes[node]["cover"] = H
        split = None
        if depth < self.p.max_depth and rows.size >= 2:
            split = self._best_split(idx, g, h)
        if split is None or not split[0] > self.p.gamma:
            self.nodes[node]["value"] = -G / (H + self.p.reg_lambda) if H + self.p.reg_lambda > 0 else 0.0
            leaf_of[rows] = node
            return node
        gain, f, thr = split
        go_left = self.X[:, f] < thr
        sel = go_left[idx]
        n_left = int(sel[0].sum())
        F = idx.shape[0]
        left_idx = idx[sel].reshape(F, n_left)
        right_idx = idx[~sel].reshape(F, idx.shape[1] - n_left)
        self.nodes[node].update(feature=f, threshold=thr, gain=gain)
        self.nodes[node]["left"] = self.grow(left_idx, g, h, depth + 1, leaf_of)
        self.nodes[node]["right"] = self.grow(right_idx, g, h, depth + 1, leaf_of)
        return node

    def tree(self):
        nd = self.nodes
        return Tree(np.array([n["feature"] for n in nd], np.int64),
                    np.array([n["threshold"] for n in nd], float),
                    np.array([n["left"] for n in nd], np.int64),
                    np.array([n["right"] for n in nd], np.int64),
                    np.ones(len(nd), dtype=bool),
                    np.array([n["value"] for n in nd], float),
                    np.array([n["gain"] for n in nd], float),
                    np.array([n["cover"] for n in nd], float))


def fit(fm: FeatureMatrix, params: BoostParams = BoostParams()) -> BoostedModel:
    """Fit a boosted tree ensemble to a feature matrix.

    The squared-error objective is used for ``task='regression'`` and the
    logistic objective for ``task='binary'``.  Training is deterministic
    given the row order.
    """
    X = np.asarray(fm.X, dtype=float)
    y = np.asarray(fm.y, dtype=float)
    n, F = X.shape
    if n < 2:
        raise TooShort("boosting needs at least two rows")
    if np.isnan(X).any():
        raise MissingValues("feature matrix contains missing values")
    if fm.task == "binary":
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("binary labels must be 0/1")
        rate = y.mean()
        if rate in (0.0, 1.0):
            raise DegenerateLabels("binary labels contain a single class")
        base = float(np.log(rate / (1 - rate))) if params.base_score is None else params.base_score
    else:
        base = float(y.mean()) if params.base_score is None else params.base_score

    order = np.argsort(X, axis=0, kind="stable").T.copy()
    raw = np.full(n, base)
    losses = [training_loss(fm.task, y, raw)]
    trees = []
    for _ in range(params.rounds):
        g, h = _grad_hess(fm.task, y, raw)
        b = _Builder(X, order, params)
        leaf_of = np.empty(n, dtype=np.int64)
        b.grow(order, g, h, 0, leaf_of)
        tree = b.tree()
        trees.append(tree)
        raw = raw + params.eta * tree.value[leaf_of]
        losses.append(training_loss(fm.task, y, raw))
    return BoostedModel(fm.task, params, trees, list(fm.names), base, losses)


def _aligned(model: BoostedModel, fm: FeatureMatrix) -> np.ndarray:
    if set(fm.names) != set(model.feature_names) or len(fm.names) != len(model.feature_names):
        missing = sorted(set(model.feature_names) - set(fm.names))
        extra = sorted(set(fm.names) - set(model.feature_names))
        raise SchemaMismatch(f"feature mismatch: missing {missing}, unexpected {extra}")
    pos = {name: i for i, name in enumerate(fm.names)}
    return np.asarray(fm.X, dtype=float)[:, [pos[n] for n in model.feature_names]]


def predict(model: BoostedModel, fm: FeatureMatrix) -> np.ndarray:
    """Regression values, or positive-class probabilities for the binary task.

    Columns are matched to the training features by name.
    """
    raw = model.raw_score(_aligned(model, fm))
    return _sigmoid(raw) if model.task == "binary" else raw


def importance(model: BoostedModel) -> list:
    """``(feature, total_gain, split_count)`` ranked by total gain, ties by name."""
    gain, count = {}, {}
    for t in model.trees:
        for i in np.flatnonzero(t.left >= 0):
            name = model.feature_names[t.feature[i]]
            gain[name] = gain.get(name, 0.0) + float(t.gain[i])
            count[name] = count.get(name, 0) + 1
    return sorted(((n, gain[n], count[n]) for n in gain), key=lambda r: (-r[1], r[0]))


def importance_csv(ranked) -> str:
    total = sum(r[1] for r in ranked) or 1.0
    lines = ["feature,total_gain,split_count,share"]
    lines += [f"{n},{repr(float(g))},{c},{repr(float(g / total))}" for n, g, c in ranked]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- metrics

def evaluate_regression(pred, truth) -> dict:
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape or pred.size < 1:
        raise ValueError("pred and truth must be equal-length and non-empty")
    err = pred - truth
    return {"rmse": float(np.sqrt(np.mean(err ** 2))), "mae": float(np.mean(np.abs(err)))}


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with High intensity as the positive class."""

    tp: int
    fp: int
    fn: int
    tn: int

    def table(self):
        """Rows = predicted (Low, High); columns = ground truth (Low, High)."""
        return [[self.tn, self.fn], [self.fp, self.tp]]

    @property
    def tpr_high(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else float("nan")

    @property
    def tpr_low(self) -> float:
        return self.tn / (self.tn + self.fp) if self.tn + self.fp else float("nan")

    @property
    def accuracy(self) -> float:
        total = self.tp + self.fp + self.fn + self.tn
        return (self.tp + self.tn) / total if total else float("nan")

    def to_dict(self):
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn,
                "table": {"rows": "predicted", "columns": "truth", "labels": ["Low", "High"],
                          "counts": self.table()}}


def evaluate_binary(prob, truth, cutoff: float = 0.5) -> dict:
    """Confusion matrix and per-class true positive rates at ``cutoff``."""
    if not 0 < cutoff < 1:
        raise ValueError("cutoff must be in (0, 1)")
    prob = np.asarray(prob, dtype=float)
    truth = np.asarray(truth).astype(int)
    if prob.shape != truth.shape:
        raise ValueError("prob and truth must have equal length")
    pred = prob >= cutoff
    actual = truth == 1
    cm = ConfusionMatrix(int(np.sum(pred & actual)), int(np.sum(pred & ~actual)),
                         int(np.sum(~pred & actual)), int(np.sum(~pred & ~actual)))
    return {"confusion": cm, "tpr_high": cm.tpr_high, "tpr_low": cm.tpr_low, "accuracy": cm.accuracy}
