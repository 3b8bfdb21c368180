"""CART classification trees, bagged forests and their evaluation.

Trees are stored as flat node arrays.  ``feature[i] == -1`` marks a leaf;
split nodes send rows with ``x[feature] <= threshold`` to ``left``.  Every
node keeps the class counts of the training rows that reached it, which
doubles as the coverage needed by path-dependent Shapley values.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

__all__ = [
    "TreeError",
    "TreeParams",
    "TreeModel",
    "TreeEnsemble",
    "gini",
    "fit_tree",
    "fit_ensemble",
    "predict_proba",
    "predict",
    "evaluate",
    "kfold_evaluate",
    "holdout_evaluate",
    "export_tree",
    "save_model",
    "load_model",
]

LEAF = -1
PROB_FLOOR = 1e-15


class TreeError(ValueError):
    pass


@dataclass(frozen=True)
class TreeParams:
    max_depth: int | None = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1

    def __post_init__(self):
        if self.max_depth is not None and self.max_depth < 0:
            raise TreeError("max_depth must be non-negative")
        if self.min_samples_split < 2 or self.min_samples_leaf < 1:
            raise TreeError("min_samples_split must be >= 2 and min_samples_leaf >= 1")


def gini(counts) -> float:
    counts = np.asarray(counts, dtype=np.float64)
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return float(1.0 - np.dot(p, p))


@dataclass(eq=False)
class TreeModel:
    left: np.ndarray
    right: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    counts: np.ndarray  # (n_nodes, n_classes) training rows per node and class
    n_features: int
    schema_hash: str = ""
    seed: int = 0
    n_rows: int = 0

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_classes(self) -> int:
        return self.counts.shape[1]

    @property
    def coverage(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def probabilities(self) -> np.ndarray:
        cover = self.coverage
        return self.counts / np.where(cover > 0, cover, 1.0)[:, None]

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] == LEAF

    def depths(self) -> np.ndarray:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for node in range(self.n_nodes):  # children always follow their parent
            if self.feature[node] != LEAF:
                depth[self.left[node]] = depth[node] + 1
                depth[self.right[node]] = depth[node] + 1
        return depth

    @property
    def max_depth(self) -> int:
        return int(self.depths().max())

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature == LEAF))

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Index of the leaf each row of ``X`` lands in."""
        X = np.atleast_2d(X)
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] != LEAF
        while active.any():
            rows = np.flatnonzero(active)
            n = node[rows]
            go_left = X[rows, self.feature[n]] <= self.threshold[n]
            node[rows] = np.where(go_left, self.left[n], self.right[n])
            active[rows] = self.feature[node[rows]] != LEAF
        return node


@dataclass(eq=False)
class TreeEnsemble:
    """Bagged trees; the prediction is the mean of the trees' leaf distributions."""

    trees: list[TreeModel] = field(default_factory=list)

    @property
    def n_features(self) -> int:
        return self.trees[0].n_features

    @property
    def n_classes(self) -> int:
        return self.trees[0].n_classes

    @property
    def schema_hash(self) -> str:
        return self.trees[0].schema_hash

    def __len__(self):
        return len(self.trees)


@njit(cache=True)
def _partition(idx, a, b, goes_left, scratch):
    # stable split of idx[a:b] into left rows then right rows
    li = a
    ri = 0
    for i in range(a, b):
        r = idx[i]
        if goes_left[r]:
            idx[li] = r
            li += 1
        else:
            scratch[ri] = r
            ri += 1
    for j in range(ri):
        idx[li + j] = scratch[j]


@njit(cache=True)
def _grow(XT, y, work, n_classes, max_depth, min_split, min_leaf):
    n_feat, n = XT.shape
    cap = 2 * n + 1
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    feature = np.full(cap, -1, np.int64)
    threshold = np.full(cap, np.nan)
    counts = np.zeros((cap, n_classes))

    # work[f, a:b] = rows of a node sorted by feature f (modified in place).
    # Only features that vary within a node get partitioned; a constant
    # feature stays constant in every descendant and its stale row still holds
    # only ancestor rows, so the first/last comparison below remains valid.
    rows = np.arange(n)
    active = np.empty(n_feat, np.int64)
    scratch = np.empty(n, np.int64)
    goes_left = np.zeros(n, np.bool_)
    lcount = np.zeros(n_classes)
    total = np.zeros(n_classes)

    # stack of (start, end, depth, node id)
    stack = np.empty((cap, 4), np.int64)
    stack[0, 0], stack[0, 1], stack[0, 2], stack[0, 3] = 0, n, 0, 0
    top = 1
    n_nodes = 1
    while top > 0:
        top -= 1
        a, b, depth, node = stack[top, 0], stack[top, 1], stack[top, 2], stack[top, 3]
        m = b - a
        total[:] = 0.0
        for i in range(a, b):
            total[y[rows[i]]] += 1.0
        counts[node, :] = total
        n_present = 0
        parent_score = 0.0
        for c in range(n_classes):
            if total[c] > 0:
                n_present += 1
            parent_score += total[c] * total[c]
        parent_score /= m
        if n_present <= 1 or m < min_split or (max_depth >= 0 and depth >= max_depth):
            continue

        n_active = 0
        for f in range(n_feat):
            if XT[f, work[f, a]] != XT[f, work[f, b - 1]]:
                active[n_active] = f
                n_active += 1

        best_score = -1.0
        best_f = -1
        best_i = -1
        for k in range(n_active):
            f = active[k]
            lcount[:] = 0.0
            for i in range(a, b - 1):
                r = work[f, i]
                lcount[y[r]] += 1.0
                nl = i - a + 1
                nr = m - nl
                if nl < min_leaf or nr < min_leaf:
                    continue
                if XT[f, r] == XT[f, work[f, i + 1]]:
                    continue
                sl = 0.0
                sr = 0.0
                for c in range(n_classes):
                    sl += lcount[c] * lcount[c]
                    rc = total[c] - lcount[c]
                    sr += rc * rc
                score = sl / nl + sr / nr
                # first (lowest feature, lowest threshold) wins near-ties
                if score > best_score + 1e-12 * abs(best_score):
                    best_score = score
                    best_f = f
                    best_i = i
        if best_f < 0 or best_score <= parent_score * (1.0 + 1e-12):
            continue

        lo = XT[best_f, work[best_f, best_i]]
        hi = XT[best_f, work[best_f, best_i + 1]]
        thr = lo + (hi - lo) / 2.0
        if thr >= hi:
            thr = lo
        feature[node] = best_f
        threshold[node] = thr
        for i in range(a, b):
            r = work[best_f, i]
            goes_left[r] = i <= best_i
        n_left = best_i - a + 1
        _partition(rows, a, b, goes_left, scratch)
        for k in range(n_active):
            _partition(work[active[k]], a, b, goes_left, scratch)

        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        left[node] = lnode
        right[node] = rnode
        # push right first so the left subtree is numbered next
        stack[top, 0], stack[top, 1], stack[top, 2], stack[top, 3] = a + n_left, b, depth + 1, rnode
        top += 1
        stack[top, 0], stack[top, 1], stack[top, 2], stack[top, 3] = a, a + n_left, depth + 1, lnode
        top += 1
    return (
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        counts[:n_nodes].copy(),
    )


@njit(cache=True)
def _resample_order(order, rows):
    """Per-feature sort order of ``X[rows]`` derived from the order of ``X``.

    Ties come out grouped by original row, which no split depends on.
    """
    n_feat, n = order.shape
    m = len(rows)
    start = np.zeros(n + 1, np.int64)
    for r in rows:
        start[r + 1] += 1
    for i in range(n):
        start[i + 1] += start[i]
    fill = start[:-1].copy()
    slots = np.empty(m, np.int64)
    for pos in range(m):
        r = rows[pos]
        slots[fill[r]] = pos
        fill[r] += 1
    out = np.empty((n_feat, m), np.int64)
    for f in range(n_feat):
        j = 0
        for i in range(n):
            r = order[f, i]
            for p in range(start[r], start[r + 1]):
                out[f, j] = slots[p]
                j += 1
    return out


def _sort_order(X):
    return np.ascontiguousarray(np.argsort(X.T, axis=1, kind="stable"))


def _as_xy(data, y=None):
    if y is None:
        X, y = data.X, data.labels
        n_classes = data.schema.action_count
        schema_hash = data.schema.hash
    else:
        X = data
        n_classes = int(np.max(y)) + 1 if len(y) else 0
        schema_hash = ""
    return np.ascontiguousarray(X, dtype=np.float64), np.asarray(y, dtype=np.int64), n_classes, schema_hash


def fit_tree(data, y=None, params: TreeParams | None = None, seed: int = 0, n_classes: int | None = None) -> TreeModel:
    """Grow a CART tree by greedy Gini minimisation.

    ``data`` is a LabeledDataset, or a feature matrix when ``y`` is given.
    Thresholds sit halfway between consecutive distinct values; equal-gain
    splits go to the lowest feature index, then the lowest threshold.
    """
    params = params or TreeParams()
    X, y, inferred, schema_hash = _as_xy(data, y)
    n_classes = n_classes or inferred
    if len(y) == 0:
        raise TreeError("cannot fit a tree on an empty dataset")
    if X.ndim != 2 or X.shape[0] != len(y):
        raise TreeError(f"feature matrix {X.shape} does not match {len(y)} labels")
    return _fit_sorted(X, y, _sort_order(X), params, seed, n_classes, schema_hash)


def _fit_sorted(X, y, work, params, seed, n_classes, schema_hash):
    max_depth = -1 if params.max_depth is None else params.max_depth
    left, right, feature, threshold, counts = _grow(
        np.ascontiguousarray(X.T), y, work, n_classes, max_depth, params.min_samples_split, params.min_samples_leaf
    )
    return TreeModel(left, right, feature, threshold, counts, X.shape[1], schema_hash, seed, len(y))


def fit_ensemble(
    data,
    y=None,
    n_trees: int = 100,
    seed: int = 0,
    params: TreeParams | None = None,
    bootstrap: bool = True,
    n_classes: int | None = None,
) -> TreeEnsemble:
    """Bagging: each tree sees a same-size bootstrap resample of the rows."""
    X, y, inferred, schema_hash = _as_xy(data, y)
    n_classes = n_classes or inferred
    if len(y) == 0:
        raise TreeError("cannot fit an ensemble on an empty dataset")
    params = params or TreeParams()
    rng = np.random.default_rng(seed)
    order = _sort_order(X)
    trees = []
    for i in range(n_trees):
        rows = rng.integers(0, len(y), len(y)) if bootstrap else np.arange(len(y))
        work = _resample_order(order, rows)
        trees.append(_fit_sorted(X[rows], y[rows], work, params, seed, n_classes, schema_hash))
    return TreeEnsemble(trees)


def _check_width(model, X):
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1] != model.n_features:
        raise TreeError(f"state has {X.shape[-1]} features, model expects {model.n_features}")
    return X


def predict_proba(model: TreeModel | TreeEnsemble, X) -> np.ndarray:
    """Class distribution for one state (1-D) or a batch of states (2-D)."""
    if hasattr(X, "schema"):
        if model.schema_hash and X.schema.hash != model.schema_hash:
            raise TreeError("dataset schema does not match the model's schema")
        X = X.X
    X = _check_width(model, X)
    single = X.ndim == 1
    X2 = np.atleast_2d(X)
    if isinstance(model, TreeEnsemble):
        out = np.zeros((len(X2), model.n_classes))
        for tree in model.trees:
            out += tree.probabilities[tree.apply(X2)]
        out /= len(model.trees)
    else:
        out = model.probabilities[model.apply(X2)]
    return out[0] if single else out


def predict(model, X) -> np.ndarray:
    """Argmax class; ties go to the lowest class index."""
    return np.argmax(predict_proba(model, X), axis=-1)


def evaluate(model, data) -> dict:
    """Accuracy and mean cross-entropy (nats, probabilities clipped at 1e-15)."""
    proba = predict_proba(model, data.X)
    return metrics_from_proba(proba, data.labels)


def metrics_from_proba(proba: np.ndarray, labels: np.ndarray) -> dict:
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise TreeError("cannot evaluate on an empty dataset")
    p_true = np.clip(proba[np.arange(len(labels)), labels], PROB_FLOOR, 1.0)
    return {
        "accuracy": float(np.mean(np.argmax(proba, axis=1) == labels)),
        "cross_entropy": float(np.mean(-np.log(p_true))),
    }


def _summary(per_fold: list[dict]) -> dict:
    out = {"folds": per_fold}
    k = len(per_fold)
    for key in ("accuracy", "cross_entropy"):
        values = np.array([m[key] for m in per_fold])
        out[key] = float(values.mean())
        out[f"{key}_stderr"] = float(values.std(ddof=1) / math.sqrt(k)) if k > 1 else 0.0
    return out


def kfold_indices(n: int, k: int, seed: int) -> list[np.ndarray]:
    if n < k:
        raise TreeError(f"{n} rows cannot be split into {k} folds")
    perm = np.random.default_rng(seed).permutation(n)
    return np.array_split(perm, k)


def kfold_evaluate(data, k: int = 5, seed: int = 0, params: TreeParams | None = None, n_trees: int | None = None) -> dict:
    """Shuffled k-fold estimate: mean and standard error of each metric.

    With ``n_trees`` the surrogate is a bagged ensemble, otherwise a single tree.
    """
    folds = kfold_indices(len(data), k, seed)
    per_fold = []
    for i, test in enumerate(folds):
        train = np.concatenate([f for j, f in enumerate(folds) if j != i])
        train_set, test_set = data.subset(np.sort(train)), data.subset(np.sort(test))
        model = _fit(train_set, params, seed, n_trees)
        per_fold.append(evaluate(model, test_set))
    return _summary(per_fold)


def _fit(data, params, seed, n_trees):
    n_classes = data.schema.action_count
    if n_trees:
        return fit_ensemble(data.X, data.labels, n_trees, seed, params, n_classes=n_classes)
    model = fit_tree(data.X, data.labels, params, seed, n_classes=n_classes)
    model.schema_hash = data.schema.hash
    return model


def holdout_evaluate(data, test_from: int = 25, seed: int = 0, params: TreeParams | None = None, n_trees: int | None = None) -> dict | None:
    """Train on trajectories with id < ``test_from``, test on the rest.

    Returns None when there is no held-out trajectory.  The standard error is
    taken over the held-out trajectories.
    """
    train = data.where_traj(lambda t: t < test_from)
    test = data.where_traj(lambda t: t >= test_from)
    if len(test) == 0:
        return None
    if len(train) == 0:
        raise TreeError("no training trajectories below the held-out boundary")
    model = _fit(train, params, seed, n_trees)
    proba = predict_proba(model, test.X)
    overall = metrics_from_proba(proba, test.labels)
    per_traj = [
        metrics_from_proba(proba[test.traj == k], test.labels[test.traj == k]) for k in np.unique(test.traj)
    ]
    out = _summary(per_traj)
    out["accuracy"] = overall["accuracy"]
    out["cross_entropy"] = overall["cross_entropy"]
    out["n_train"] = len(train)
    out["n_test"] = len(test)
    return out


# -- export and persistence -------------------------------------------------------


def _fmt_threshold(t: float) -> str:
    return f"{t:g}" if float(t).is_integer() or abs(t) >= 1e-3 else repr(float(t))


def export_tree(
    model: TreeModel,
    depth_limit: int = 3,
    feature_names: Sequence[str] | None = None,
    class_names: Sequence[str] | None = None,
) -> str:
    """Graphviz ``digraph`` of the nodes down to ``depth_limit``."""
    if depth_limit < 1:
        raise TreeError("depth_limit must be at least 1")
    names = list(feature_names) if feature_names is not None else [f"x[{i}]" for i in range(model.n_features)]
    classes = list(class_names) if class_names is not None else [str(c) for c in range(model.n_classes)]
    lines = ["digraph Tree {", 'node [shape=box, fontname="helvetica"] ;']
    edges = []
    depth = model.depths()
    stack = [0]
    while stack:
        node = stack.pop()
        counts = model.counts[node]
        majority = classes[int(np.argmax(counts))]
        count_text = "[" + ", ".join(f"{c:g}" for c in counts) + "]"
        if model.feature[node] != LEAF and depth[node] < depth_limit:
            rule = f"{names[model.feature[node]]} <= {_fmt_threshold(model.threshold[node])}"
            label = f"{rule}\\ncounts = {count_text}\\nclass = {majority}"
            for child in (model.right[node], model.left[node]):
                stack.append(child)
            edges.append(f"{node} -> {model.left[node]} [label=\"True\"] ;")
            edges.append(f"{node} -> {model.right[node]} [label=\"False\"] ;")
        else:
            label = f"counts = {count_text}\\nclass = {majority}"
        lines.append(f'{node} [label="{label}"] ;')
    lines.extend(edges)
    lines.append("}")
    return "\n".join(lines) + "\n"


def _node_record(model: TreeModel, node: int) -> dict:
    rec = {"counts": [float(c) for c in model.counts[node]]}
    if model.feature[node] != LEAF:
        rec["feature"] = int(model.feature[node])
        rec["threshold"] = float(model.threshold[node])
        rec["left"] = _node_record(model, int(model.left[node]))
        rec["right"] = _node_record(model, int(model.right[node]))
    return rec


def tree_to_json(model: TreeModel) -> dict:
    return {
        "n_features": model.n_features,
        "n_classes": model.n_classes,
        "seed": model.seed,
        "n_rows": model.n_rows,
        "root": _node_record(model, 0),
    }


def tree_from_json(obj: dict, schema_hash: str = "") -> TreeModel:
    left, right, feature, threshold, counts = [], [], [], [], []

    def visit(rec):
        i = len(feature)
        left.append(-1)
        right.append(-1)
        feature.append(int(rec.get("feature", LEAF)))
        threshold.append(float(rec.get("threshold", math.nan)))
        counts.append(rec["counts"])
        if "feature" in rec:
            left[i] = visit(rec["left"])
            right[i] = visit(rec["right"])
        return i

    visit(obj["root"])
    return TreeModel(
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=np.float64),
        np.array(counts, dtype=np.float64).reshape(len(feature), int(obj["n_classes"])),
        int(obj["n_features"]),
        schema_hash,
        int(obj.get("seed", 0)),
        int(obj.get("n_rows", 0)),
    )


def save_model(model: TreeModel | TreeEnsemble, path: str | os.PathLike) -> None:
    if isinstance(model, TreeEnsemble):
        body = {"kind": "ensemble", "schema_hash": model.schema_hash, "trees": [tree_to_json(t) for t in model.trees]}
    else:
        body = {"kind": "tree", "schema_hash": model.schema_hash, "tree": tree_to_json(model)}
    with open(path, "w") as fh:
        json.dump(body, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_model(path: str | os.PathLike, schema_hash: str | None = None) -> TreeModel | TreeEnsemble:
    """Load a tree or ensemble; rejects a model built for another schema."""
    with open(path) as fh:
        body = json.load(fh)
    stored = body.get("schema_hash", "")
    if schema_hash is not None and stored != schema_hash:
        raise TreeError(f"{path}: model schema {stored!r} does not match dataset schema {schema_hash!r}")
    if body["kind"] == "ensemble":
        return TreeEnsemble([tree_from_json(t, stored) for t in body["trees"]])
    return tree_from_json(body["tree"], stored)
