"""Gradient-boosted regression trees for merge-saving prediction.

Squared-error loss, so each tree is fitted to the plain residuals of the
ensemble so far. Trees are grown greedily with an exact least-squares split
search over midpoints between consecutive distinct feature values.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Union

import numpy as np

PathLike = Union[str, Path]

MODEL_FORMAT = "taskmerge-model"
MODEL_VERSION = 1
LEAF = -1

# Gains within this fraction of the node's sum of squared residuals are ties.
TIE_RTOL = 1e-10


class ModelFormatError(ValueError):
    """Model file is unreadable, truncated, or inconsistent."""


class ModelVersionError(ModelFormatError):
    pass


@dataclass(frozen=True)
class Hyperparams:
    num_trees: int = 350
    learning_rate: float = 0.1
    max_depth: int = 11
    min_samples_split: int = 30
    min_samples_leaf: int = 2

    def __post_init__(self):
        if self.num_trees < 0:
            raise ValueError("num_trees must be >= 0")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")

    def replace(self, **changes) -> "Hyperparams":
        data = asdict(self)
        data.update(changes)
        return Hyperparams(**data)


@dataclass(frozen=True)
class Tree:
    """A regression tree stored as parallel arrays in pre-order.

    Node ``i`` is a leaf when ``feature[i] == LEAF``; otherwise samples with
    ``x[feature[i]] <= threshold[i]`` go to ``left[i]``, the rest to ``right[i]``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray

    @property
    def node_count(self) -> int:
        return len(self.feature)

    def is_leaf(self, i: int) -> bool:
        return self.feature[i] == LEAF

    def depth(self) -> int:
        def _d(i):
            return 0 if self.is_leaf(i) else 1 + max(_d(self.left[i]), _d(self.right[i]))
        return _d(0)

    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.feature == LEAF)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row of X."""
        node = np.zeros(len(X), dtype=np.int64)
        active = np.flatnonzero(self.feature[node] != LEAF)
        while active.size:
            cur = node[active]
            go_left = X[active, self.feature[cur]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
            active = active[self.feature[node[active]] != LEAF]
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]


@dataclass(frozen=True)
class SavingModel:
    base_prediction: float
    trees: tuple[Tree, ...]
    learning_rate: float
    feature_count: int
    hyperparams: Hyperparams = field(default_factory=Hyperparams)

    def predict(self, X) -> np.ndarray:
        """B0 + L * sum of tree outputs, for a matrix or a single row."""
        X = _as_matrix(X, self.feature_count)
        total = np.zeros(len(X))
        for tree in self.trees:
            total += tree.predict(X)
        return self.base_prediction + self.learning_rate * total

    def staged_predict(self, X) -> Iterator[np.ndarray]:
        """Predictions after 0, 1, ..., M trees."""
        X = _as_matrix(X, self.feature_count)
        total = np.zeros(len(X))
        yield np.full(len(X), self.base_prediction)
        for tree in self.trees:
            total += tree.predict(X)
            yield self.base_prediction + self.learning_rate * total

    def truncated(self, num_trees: int) -> "SavingModel":
        return SavingModel(
            self.base_prediction, self.trees[:num_trees], self.learning_rate,
            self.feature_count, self.hyperparams.replace(num_trees=min(num_trees, len(self.trees))),
        )


def _as_matrix(X, feature_count: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != feature_count:
        raise ValueError(f"expected {feature_count} features, got shape {X.shape}")
    return X


def predict(model, x) -> float:
    """Predicted saving for a single feature vector."""
    if hasattr(x, "as_array"):
        x = x.as_array()
    return float(model.predict(np.asarray(x, dtype=float))[0])


# -- split search -----------------------------------------------------------

def _scan_sorted(xs: np.ndarray, rs: np.ndarray, min_leaf: int, tol: float):
    """Best split of pre-sorted (feature, residual) pairs.

    Returns (position, gain) where the left child is ``xs[:position + 1]``,
    or None when no legal split gains more than ``tol``.
    """
    n = len(xs)
    if n < 2 * min_leaf or xs[0] == xs[-1]:
        return None
    csum = np.cumsum(rs)
    total = csum[-1]
    lo, hi = min_leaf - 1, n - min_leaf  # left sizes min_leaf..n-min_leaf
    pos = np.arange(lo, hi)
    pos = pos[xs[pos] < xs[pos + 1]]
    if pos.size == 0:
        return None
    n_left = pos + 1.0
    s_left = csum[pos]
    s_right = total - s_left
    gain = s_left * s_left / n_left + s_right * s_right / (n - n_left) - total * total / n
    best = gain.max()
    if best <= tol:
        return None
    k = int(np.argmax(gain >= best - tol))  # lowest threshold among ties
    return int(pos[k]), float(gain[k])


def _tolerance(rs: np.ndarray) -> float:
    return TIE_RTOL * float(np.dot(rs, rs))


def best_split(x, r, min_samples_leaf: int = 1) -> Optional[tuple[float, float]]:
    """Least-squares split of one feature column.

    Returns (threshold, SSE reduction) for the split maximizing the reduction
    with both children holding at least ``min_samples_leaf`` samples, or None.
    Ties go to the lowest threshold.
    """
    x = np.asarray(x, dtype=float)
    r = np.asarray(r, dtype=float)
    order = np.argsort(x, kind="stable")
    xs, rs = x[order], r[order]
    found = _scan_sorted(xs, rs, min_samples_leaf, _tolerance(r))
    if found is None:
        return None
    pos, gain = found
    return (xs[pos] + xs[pos + 1]) / 2.0, gain


def best_split_all(X, r, min_samples_leaf: int = 1) -> Optional[tuple[int, float, float]]:
    """(feature, threshold, reduction) of the best split over all columns.

    Ties go to the lowest feature index, then the lowest threshold.
    """
    X = np.asarray(X, dtype=float)
    r = np.asarray(r, dtype=float)
    tol = _tolerance(r)
    best = None
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        found = _scan_sorted(X[order, f], r[order], min_samples_leaf, tol)
        if found is not None and (best is None or found[1] > best[2] + tol):
            pos, gain = found
            xs = X[order, f]
            best = (f, (xs[pos] + xs[pos + 1]) / 2.0, gain)
    return best


# -- tree growing -----------------------------------------------------------

class _TreeBuilder:
    def __init__(self, X: np.ndarray, sorted_idx: list[np.ndarray], hp: Hyperparams):
        self.X = X
        self.sorted_idx = sorted_idx
        self.hp = hp
        self.go_left = np.zeros(len(X), dtype=bool)
        # Columns with a single value can never split.
        self.features = [f for f in range(X.shape[1]) if X[sorted_idx[f][0], f] != X[sorted_idx[f][-1], f]]

    def build(self, r: np.ndarray) -> tuple[Tree, list[tuple[int, np.ndarray]]]:
        self.r = r
        self.nodes: list[list] = []
        self.leaf_members: list[tuple[int, np.ndarray]] = []
        self._grow(self.sorted_idx, 0)
        feature, threshold, left, right, value, n_samples = (list(c) for c in zip(*self.nodes))
        tree = Tree(
            np.array(feature, dtype=np.int64), np.array(threshold, dtype=float),
            np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
            np.array(value, dtype=float), np.array(n_samples, dtype=np.int64),
        )
        return tree, self.leaf_members

    def _grow(self, idx_by_feature: list[np.ndarray], depth: int) -> int:
        members = idx_by_feature[0]
        n = len(members)
        rs_node = self.r[members]
        node_id = len(self.nodes)
        self.nodes.append([LEAF, 0.0, LEAF, LEAF, float(np.mean(rs_node)), n])

        split = None
        if depth < self.hp.max_depth and n >= self.hp.min_samples_split:
            split = self._find_split(idx_by_feature, rs_node)
        if split is None:
            self.leaf_members.append((node_id, members))
            return node_id

        f, thr = split
        self.go_left[members] = self.X[members, f] <= thr
        left_idx, right_idx = [], []
        for order in idx_by_feature:
            mask = self.go_left[order]
            left_idx.append(order[mask])
            right_idx.append(order[~mask])
        self.go_left[members] = False
        node = self.nodes[node_id]
        node[0], node[1] = f, thr
        node[2] = self._grow(left_idx, depth + 1)
        node[3] = self._grow(right_idx, depth + 1)
        return node_id

    def _find_split(self, idx_by_feature, rs_node):
        tol = _tolerance(rs_node)
        best_f, best_pos, best_gain = None, None, None
        for f in self.features:
            order = idx_by_feature[f]
            xs = self.X[order, f]
            found = _scan_sorted(xs, self.r[order], self.hp.min_samples_leaf, tol)
            if found is not None and (best_gain is None or found[1] > best_gain + tol):
                best_f, (best_pos, best_gain) = f, found
        if best_f is None:
            return None
        xs = self.X[idx_by_feature[best_f], best_f]
        return best_f, (xs[best_pos] + xs[best_pos + 1]) / 2.0


def _presort(X: np.ndarray) -> list[np.ndarray]:
    return [np.argsort(X[:, f], kind="stable") for f in range(X.shape[1])]


def fit_tree(X, residuals, hp: Hyperparams) -> Tree:
    """Greedy least-squares regression tree; leaves hold mean residuals."""
    X = np.asarray(X, dtype=float)
    r = np.asarray(residuals, dtype=float)
    if len(X) == 0:
        raise ValueError("cannot fit a tree to zero samples")
    tree, _ = _TreeBuilder(X, _presort(X), hp).build(r)
    return tree


def train(train_set, hp: Hyperparams | None = None) -> SavingModel:
    """Boost ``hp.num_trees`` trees on a Dataset (or an (X, y) pair)."""
    hp = hp or Hyperparams()
    X, y = (train_set.X, train_set.y) if hasattr(train_set, "X") else train_set
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2:
        raise ValueError("feature rows must all have the same length")
    if len(y) == 0:
        raise ValueError("cannot train on an empty dataset")
    if len(X) != len(y):
        raise ValueError(f"{len(X)} feature rows but {len(y)} targets")

    base = float(np.mean(y))
    fitted = np.full(len(y), base)
    builder = _TreeBuilder(X, _presort(X), hp)
    trees = []
    for _ in range(hp.num_trees):
        residuals = y - fitted
        tree, leaf_members = builder.build(residuals)
        for leaf, members in leaf_members:
            fitted[members] += hp.learning_rate * tree.value[leaf]
        trees.append(tree)
    return SavingModel(base, tuple(trees), hp.learning_rate, X.shape[1], hp)


# -- persistence ------------------------------------------------------------

def _tree_to_dict(tree: Tree) -> dict:
    nodes = []
    for i in range(tree.node_count):
        if tree.is_leaf(i):
            nodes.append({"leaf": float(tree.value[i]), "n": int(tree.n_samples[i])})
        else:
            nodes.append({
                "feature": int(tree.feature[i]), "threshold": float(tree.threshold[i]),
                "value": float(tree.value[i]), "n": int(tree.n_samples[i]),
            })
    return {"nodes": nodes}


def _tree_from_dict(data: dict, feature_count: int) -> Tree:
    nodes = data["nodes"]
    if not isinstance(nodes, list) or not nodes:
        raise ModelFormatError("tree without nodes")
    n = len(nodes)
    feature = np.full(n, LEAF, dtype=np.int64)
    threshold = np.zeros(n)
    left = np.full(n, LEAF, dtype=np.int64)
    right = np.full(n, LEAF, dtype=np.int64)
    value = np.zeros(n)
    n_samples = np.zeros(n, dtype=np.int64)

    # Rebuild child links from pre-order.
    def walk(i: int) -> int:
        if i >= n:
            raise ModelFormatError("truncated tree")
        node = nodes[i]
        n_samples[i] = int(node.get("n", 0))
        if "leaf" in node:
            value[i] = float(node["leaf"])
            return i + 1
        f = int(node["feature"])
        if not 0 <= f < feature_count:
            raise ModelFormatError(f"feature index {f} out of range")
        feature[i], threshold[i], value[i] = f, float(node["threshold"]), float(node.get("value", 0.0))
        left[i] = i + 1
        nxt = walk(i + 1)
        right[i] = nxt
        return walk(nxt)

    if walk(0) != n:
        raise ModelFormatError("trailing nodes after tree")
    return Tree(feature, threshold, left, right, value, n_samples)


def model_to_dict(model: SavingModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kind": "gbdt",
        "hyperparams": asdict(model.hyperparams),
        "base_prediction": model.base_prediction,
        "learning_rate": model.learning_rate,
        "feature_count": model.feature_count,
        "trees": [_tree_to_dict(t) for t in model.trees],
    }


def write_envelope(payload: dict, path: PathLike) -> None:
    text = json.dumps(payload, separators=(",", ":"))
    Path(path).write_text(text + "\n")


def read_envelope(path: PathLike, kind: str | None = None) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, UnicodeDecodeError) as exc:
        raise ModelFormatError(f"{path}: cannot read model file: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: corrupt or truncated model file ({exc})") from None
    if not isinstance(data, dict) or data.get("format") != MODEL_FORMAT:
        raise ModelFormatError(f"{path}: not a {MODEL_FORMAT} file")
    if data.get("version") != MODEL_VERSION:
        raise ModelVersionError(f"{path}: model version {data.get('version')!r}, expected {MODEL_VERSION}")
    if kind is not None and data.get("kind") != kind:
        raise ModelFormatError(f"{path}: model kind {data.get('kind')!r}, expected {kind!r}")
    return data


def model_from_dict(data: dict) -> SavingModel:
    try:
        hp = Hyperparams(**data["hyperparams"])
        feature_count = int(data["feature_count"])
        trees = tuple(_tree_from_dict(t, feature_count) for t in data["trees"])
        return SavingModel(float(data["base_prediction"]), trees, float(data["learning_rate"]), feature_count, hp)
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError, RecursionError) as exc:
        raise ModelFormatError(f"malformed model: {exc!r}") from None


def save_model(model: SavingModel, path: PathLike) -> None:
    write_envelope(model_to_dict(model), path)


def load_model(path: PathLike) -> SavingModel:
    data = read_envelope(path, kind="gbdt")
    try:
        return model_from_dict(data)
    except ModelFormatError as exc:
        raise ModelFormatError(f"{path}: {exc}") from None
