"""Exact Shapley attributions for trees and bagged ensembles.

Values use the tree-path-dependent expectation: when a feature is "missing",
a split on it sends the state down both children weighted by their training
coverage.  ``tree_shap`` is the polynomial-time path algorithm; the
exponential ``brute_force_shap`` enumerates feature subsets directly and exists
to check it.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np
from numba import njit

from .trees import LEAF, TreeEnsemble, TreeError, TreeModel

__all__ = [
    "ShapError",
    "Attribution",
    "SpriteAttribution",
    "tree_shap",
    "brute_force_shap",
    "ensemble_shap",
    "rank_sprites",
    "attribution_table",
    "BRUTE_FORCE_LIMIT",
]

BRUTE_FORCE_LIMIT = 20


class ShapError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Attribution:
    """Per-class Shapley values of one state.

    ``values`` has shape ``(n_features, n_classes)``; ``output`` is the model's
    class distribution for ``state``, so ``base_value + values.sum(0)`` equals
    it up to rounding.
    """

    base_value: np.ndarray
    values: np.ndarray
    output: np.ndarray
    state: np.ndarray

    @property
    def predicted_class(self) -> int:
        return int(np.argmax(self.output))

    @property
    def n_features(self) -> int:
        return self.values.shape[0]

    def local_accuracy_error(self) -> float:
        return float(np.max(np.abs(self.base_value + self.values.sum(axis=0) - self.output)))


@dataclass(frozen=True)
class SpriteAttribution:
    """Present slots ranked by their largest absolute Shapley value.

    All three tuples are in rank order; ``ranks`` is ``1..len(slots)``.
    """

    slots: tuple[int, ...]
    max_abs_shap: tuple[float, ...]
    ranks: tuple[int, ...]
    predicted_class: int

    def top(self, fraction: float = 0.1) -> tuple[int, ...]:
        """The first ``ceil(fraction * n)`` slots (at least one if any)."""
        if not self.slots:
            return ()
        n = max(1, math.ceil(fraction * len(self.slots) - 1e-12))
        return self.slots[:n]

    def __len__(self):
        return len(self.slots)


def _check_state(model, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or len(x) != model.n_features:
        raise TreeError(f"state has shape {x.shape}, model expects {model.n_features} features")
    return x


def _check_coverage(model: TreeModel) -> np.ndarray:
    if model.counts is None or len(model.counts) != model.n_nodes:
        raise ShapError("tree has no per-node coverage counts")
    cover = model.coverage
    if np.any(cover <= 0):
        raise ShapError("tree has nodes without training coverage")
    return cover


# -- fast path --------------------------------------------------------------------


@njit(cache=True)
def _extend(feat, zero, one, weight, depth, pz, po, pi):
    feat[depth] = pi
    zero[depth] = pz
    one[depth] = po
    weight[depth] = 1.0 if depth == 0 else 0.0
    for i in range(depth - 1, -1, -1):
        weight[i + 1] += po * weight[i] * (i + 1) / (depth + 1)
        weight[i] = pz * weight[i] * (depth - i) / (depth + 1)


@njit(cache=True)
def _unwind(feat, zero, one, weight, depth, i):
    o = one[i]
    z = zero[i]
    n = weight[depth]
    for j in range(depth - 1, -1, -1):
        if o != 0.0:
            t = weight[j]
            weight[j] = n * (depth + 1) / ((j + 1) * o)
            n = t - weight[j] * z * (depth - j) / (depth + 1)
        else:
            weight[j] = weight[j] * (depth + 1) / (z * (depth - j))
    for j in range(i, depth):
        feat[j] = feat[j + 1]
        zero[j] = zero[j + 1]
        one[j] = one[j + 1]


@njit(cache=True)
def _unwound_sum(zero, one, weight, depth, i):
    o = one[i]
    z = zero[i]
    n = weight[depth]
    total = 0.0
    for j in range(depth - 1, -1, -1):
        if o != 0.0:
            t = n * (depth + 1) / ((j + 1) * o)
            total += t
            n = weight[j] - t * z * (depth - j) / (depth + 1)
        else:
            total += weight[j] / (z * (depth - j) / (depth + 1))
    return total


@njit(cache=True)
def _tree_shap(x, left, right, feature, threshold, cover, leaf_values, max_depth, n_features):
    phi = np.zeros((n_features, leaf_values.shape[1]))
    size = (max_depth + 2) * (max_depth + 3) // 2 + max_depth + 2
    feat = np.zeros(size, np.int64)
    zero = np.zeros(size)
    one = np.zeros(size)
    weight = np.zeros(size)

    # Depth-first walk with an explicit stack.  A visit copies the parent's
    # path segment to the slot right after it and extends it; children only
    # ever read their parent's segment, so nothing needs undoing afterwards.
    n_frames = len(feature) + 1
    s_node = np.empty(n_frames, np.int64)
    s_start = np.empty(n_frames, np.int64)
    s_depth = np.empty(n_frames, np.int64)
    s_feat = np.empty(n_frames, np.int64)
    s_zero = np.empty(n_frames)
    s_one = np.empty(n_frames)
    s_node[0], s_start[0], s_depth[0], s_feat[0], s_zero[0], s_one[0] = 0, 0, 0, -1, 1.0, 1.0
    top = 1
    while top > 0:
        top -= 1
        node, start, depth = s_node[top], s_start[top], s_depth[top]
        nxt = start + depth + 1
        for i in range(depth + 1):
            feat[nxt + i] = feat[start + i]
            zero[nxt + i] = zero[start + i]
            one[nxt + i] = one[start + i]
            weight[nxt + i] = weight[start + i]
        f = feat[nxt:]
        z = zero[nxt:]
        o = one[nxt:]
        w = weight[nxt:]
        _extend(f, z, o, w, depth, s_zero[top], s_one[top], s_feat[top])

        split = feature[node]
        if split < 0:
            for i in range(1, depth + 1):
                scale = _unwound_sum(z, o, w, depth, i) * (o[i] - z[i])
                for c in range(leaf_values.shape[1]):
                    phi[f[i], c] += scale * leaf_values[node, c]
            continue

        if x[split] <= threshold[node]:
            hot, cold = left[node], right[node]
        else:
            hot, cold = right[node], left[node]
        iz = 1.0
        io = 1.0
        k = 1
        while k <= depth:
            if f[k] == split:
                break
            k += 1
        if k <= depth:
            iz = z[k]
            io = o[k]
            _unwind(f, z, o, w, depth, k)
            depth -= 1
        for child, po in ((cold, 0.0), (hot, io)):
            s_node[top] = child
            s_start[top] = nxt
            s_depth[top] = depth + 1
            s_feat[top] = split
            s_zero[top] = iz * cover[child] / cover[node]
            s_one[top] = po
            top += 1
    return phi


def _prepared(model: TreeModel):
    cache = getattr(model, "_shap_arrays", None)
    if cache is None:
        cover = _check_coverage(model).astype(np.float64)
        cache = (
            np.ascontiguousarray(model.left, dtype=np.int64),
            np.ascontiguousarray(model.right, dtype=np.int64),
            np.ascontiguousarray(model.feature, dtype=np.int64),
            np.ascontiguousarray(model.threshold, dtype=np.float64),
            cover,
            np.ascontiguousarray(model.probabilities, dtype=np.float64),
            model.max_depth,
        )
        model._shap_arrays = cache
    return cache


def tree_shap(model: TreeModel, x) -> Attribution:
    """Exact path-dependent Shapley values of every feature for every class."""
    x = _check_state(model, x)
    left, right, feature, threshold, cover, probs, depth = _prepared(model)
    phi = _tree_shap(x, left, right, feature, threshold, cover, probs, depth, model.n_features)
    base = probs[0].copy()  # the root distribution is the coverage-weighted leaf mean
    return Attribution(base, phi, _leaf_output(model, x), x)


def _leaf_output(model: TreeModel, x) -> np.ndarray:
    node = 0
    while model.feature[node] != LEAF:
        node = model.left[node] if x[model.feature[node]] <= model.threshold[node] else model.right[node]
    return model.probabilities[node].copy()


# -- oracle -----------------------------------------------------------------------


def _expectation(model: TreeModel, x, known: frozenset, node: int = 0) -> np.ndarray:
    f = int(model.feature[node])
    if f == LEAF:
        counts = model.counts[node]
        return counts / counts.sum()
    lo, hi = int(model.left[node]), int(model.right[node])
    if f in known:
        return _expectation(model, x, known, lo if x[f] <= model.threshold[node] else hi)
    cover = model.counts.sum(axis=1)
    return (
        cover[lo] * _expectation(model, x, known, lo) + cover[hi] * _expectation(model, x, known, hi)
    ) / cover[node]


def brute_force_shap(model: TreeModel, x) -> Attribution:
    """Shapley values by enumerating all feature subsets (small models only)."""
    m = model.n_features
    if m > BRUTE_FORCE_LIMIT:
        raise ShapError(f"brute force needs at most {BRUTE_FORCE_LIMIT} features, model has {m}")
    x = _check_state(model, x)
    _check_coverage(model)
    value = {}
    for size in range(m + 1):
        for subset in combinations(range(m), size):
            key = frozenset(subset)
            value[key] = _expectation(model, x, key)
    phi = np.zeros((m, model.n_classes))
    for f in range(m):
        others = [g for g in range(m) if g != f]
        for size in range(m):
            w = math.factorial(size) * math.factorial(m - size - 1) / math.factorial(m)
            for subset in combinations(others, size):
                s = frozenset(subset)
                phi[f] += w * (value[s | {f}] - value[s])
    return Attribution(value[frozenset()], phi, value[frozenset(range(m))], x)


# -- ensembles and sprites ---------------------------------------------------------


def ensemble_shap(model: TreeEnsemble | TreeModel, x) -> Attribution:
    """Mean of the per-tree attributions; exact for the mean-of-trees output."""
    if isinstance(model, TreeModel):
        return tree_shap(model, x)
    if not model.trees:
        raise ShapError("empty ensemble")
    x = _check_state(model, x)
    base = np.zeros(model.n_classes)
    values = np.zeros((model.n_features, model.n_classes))
    output = np.zeros(model.n_classes)
    for tree in model.trees:
        a = tree_shap(tree, x)
        base += a.base_value
        values += a.values
        output += a.output
    n = len(model.trees)
    return Attribution(base / n, values / n, output / n, x)


def rank_sprites(attr: Attribution, schema, cls: int | None = None) -> SpriteAttribution:
    """Rank the slots present in the state by max |shap| over their five features.

    Uses the predicted class unless ``cls`` is given; ties keep slot order.
    """
    cls = attr.predicted_class if cls is None else cls
    x = attr.state
    scored = []
    for i in range(len(schema.slots)):
        cols = schema.slot_columns(i)
        if x[cols.start] <= 0.5:
            continue
        scored.append((i, float(np.max(np.abs(attr.values[cols, cls])))))
    scored.sort(key=lambda item: -item[1])  # stable: ties stay in slot order
    return SpriteAttribution(
        tuple(i for i, _ in scored),
        tuple(v for _, v in scored),
        tuple(range(1, len(scored) + 1)),
        cls,
    )


def attribution_table(attr: Attribution, feature_names: Sequence[str], class_names: Sequence[str] | None = None) -> str:
    """Delimited ``feature,class,shapley_value`` rows, base values first."""
    classes = list(class_names) if class_names is not None else [str(c) for c in range(attr.values.shape[1])]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["feature", "class", "shapley_value"])
    for c, name in enumerate(classes):
        writer.writerow(["(base)", name, format(float(attr.base_value[c]), ".17g")])
    for f, fname in enumerate(feature_names):
        for c, name in enumerate(classes):
            writer.writerow([fname, name, format(float(attr.values[f, c]), ".17g")])
    return buf.getvalue()
