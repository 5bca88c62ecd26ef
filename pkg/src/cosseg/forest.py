"""Gini decision-tree ensemble with bootstrap resampling and per-node feature sampling.

Trees are plain nested dataclasses (:class:`Split` / :class:`Leaf`). Every
random draw comes from a per-tree stream derived from ``(seed, tree_index)``
so training is reproducible and order-independent across trees.

Split search is exact: candidate scores are compared in floating point, then
near-ties are re-scored with rational arithmetic so that tie-breaking by
(lower feature index, lower threshold) never depends on rounding.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .model import FEATURE_NAMES, N_FEATURES, CosLabel, SegmentMatrix, SegmentVector, check_label_set

MODEL_FORMAT = "cosseg.forest"
MODEL_VERSION = 1
SUPPORTED_VERSIONS = (1,)


# --- tree nodes ------------------------------------------------------------


def gini(class_counts: Sequence[int] | np.ndarray) -> float:
    """Gini impurity ``1 - sum(p_k^2)`` of a count vector."""
    counts = np.asarray(class_counts, dtype=np.float64)
    total = counts.sum()
    if counts.size == 0 or total < 1:
        raise ValueError("gini needs at least one sample")
    p = counts / total
    return float(1.0 - np.dot(p, p))


def _majority(counts: tuple[int, ...]) -> int:
    # first index of the maximum == lowest class id on ties
    return max(range(len(counts)), key=lambda k: (counts[k], -k))


@dataclass(frozen=True)
class Leaf:
    class_counts: tuple[int, ...]

    def __post_init__(self) -> None:
        counts = tuple(int(c) for c in self.class_counts)
        if not counts or sum(counts) < 1 or min(counts) < 0:
            raise ValueError("leaf needs non-empty, non-negative class counts")
        object.__setattr__(self, "class_counts", counts)

    @property
    def n_samples(self) -> int:
        return sum(self.class_counts)

    @property
    def impurity(self) -> float:
        return gini(self.class_counts)

    @property
    def prediction(self) -> int:
        return _majority(self.class_counts)


@dataclass(frozen=True)
class Split:
    """Internal node: ``x[feature] <= threshold`` goes left."""

    feature: int
    threshold: float
    class_counts: tuple[int, ...]
    left: "TreeNode"
    right: "TreeNode"

    def __post_init__(self) -> None:
        object.__setattr__(self, "class_counts", tuple(int(c) for c in self.class_counts))

    @property
    def n_samples(self) -> int:
        return sum(self.class_counts)

    @property
    def impurity(self) -> float:
        return gini(self.class_counts)

    @property
    def impurity_decrease(self) -> float:
        """Parent impurity minus the sample-weighted impurity of both children."""
        n = self.n_samples
        nl, nr = self.left.n_samples, self.right.n_samples
        return self.impurity - (nl * self.left.impurity + nr * self.right.impurity) / n


TreeNode = Union[Split, Leaf]


def iter_nodes(node: TreeNode):
    stack = [node]
    while stack:
        cur = stack.pop()
        yield cur
        if isinstance(cur, Split):
            stack.append(cur.right)
            stack.append(cur.left)


def tree_depth(node: TreeNode) -> int:
    if isinstance(node, Leaf):
        return 0
    return 1 + max(tree_depth(node.left), tree_depth(node.right))


def _apply(node: TreeNode, X: np.ndarray, idx: np.ndarray, out: np.ndarray) -> None:
    if isinstance(node, Leaf):
        out[idx] = node.prediction
        return
    go_left = X[idx, node.feature] <= node.threshold
    if go_left.any():
        _apply(node.left, X, idx[go_left], out)
    if not go_left.all():
        _apply(node.right, X, idx[~go_left], out)


def predict_tree(node: TreeNode, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    out = np.empty(len(X), dtype=np.int64)
    if len(X):
        _apply(node, X, np.arange(len(X)), out)
    return out


# --- split search ----------------------------------------------------------


@dataclass(frozen=True)
class SplitChoice:
    feature: int
    threshold: float
    impurity_decrease: float


def _midpoint(lo: float, hi: float) -> float:
    mid = lo / 2.0 + hi / 2.0
    if mid >= hi or not math.isfinite(mid):
        mid = lo
    return mid


def best_split(
    X: np.ndarray,
    y: np.ndarray,
    feature_subset: Sequence[int] | None = None,
    n_classes: int | None = None,
) -> SplitChoice | None:
    """Best Gini split over midpoints of consecutive distinct values.

    Returns ``None`` when no candidate strictly lowers impurity. Ties go to the
    lower feature index, then the lower threshold.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    m = len(y)
    if m < 2:
        return None
    if n_classes is None:
        n_classes = int(y.max()) + 1
    features = sorted(range(X.shape[1]) if feature_subset is None else set(feature_subset))

    onehot = np.zeros((m, n_classes), dtype=np.int64)
    onehot[np.arange(m), y] = 1
    total = onehot.sum(axis=0)
    parent_sq = int(np.dot(total, total))
    nl = np.arange(1, m, dtype=np.float64)
    nr = m - nl

    per_feature = []
    best_float = -math.inf
    for f in features:
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        boundary = np.flatnonzero(xs[1:] > xs[:-1])
        if boundary.size == 0:
            continue
        left = np.cumsum(onehot[order], axis=0)[:-1]
        right = total - left
        score = (left * left).sum(axis=1) / nl + (right * right).sum(axis=1) / nr
        score = score[boundary]
        per_feature.append((f, xs, boundary, left[boundary], score))
        best_float = max(best_float, float(score.max()))
    if not per_feature:
        return None

    # anything within rounding distance of the float maximum is re-scored exactly
    slack = 1e-9 * max(1.0, abs(best_float))
    best_key = None
    best = None
    for f, xs, boundary, left_counts, score in per_feature:
        for j in np.flatnonzero(score >= best_float - slack):
            b = int(boundary[j])
            n_left = b + 1
            lc = left_counts[j]
            rc = total - lc
            exact = Fraction(int(np.dot(lc, lc)), n_left) + Fraction(int(np.dot(rc, rc)), m - n_left)
            if best_key is None or exact > best_key:
                best_key = exact
                best = (f, _midpoint(float(xs[b]), float(xs[b + 1])))
    decrease = (best_key - Fraction(parent_sq, m)) / m
    if decrease <= 0:
        return None
    return SplitChoice(best[0], best[1], float(decrease))


# --- forest ----------------------------------------------------------------


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 10
    seed: int = 0
    max_features: int | None = None  # None -> ceil(sqrt(n_features))
    bootstrap: bool = True
    min_samples_split: int = 2
    max_depth: int | None = None

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ValueError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")
        if self.max_features is not None and self.max_features < 1:
            raise ValueError(f"max_features must be >= 1, got {self.max_features}")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")

    def features_per_split(self, n_features: int) -> int:
        if self.max_features is None:
            return math.ceil(math.sqrt(n_features))
        return min(self.max_features, n_features)


@dataclass(frozen=True)
class TrainMeta:
    n: int | None = None
    s_t: int | None = None
    seed: int | None = None
    dataset: str = ""


def tree_seed_sequences(seed: int, tree_index: int) -> tuple[np.random.SeedSequence, np.random.SeedSequence]:
    """(bootstrap, feature-sampling) seed sequences for one tree."""
    root = np.random.SeedSequence(entropy=seed, spawn_key=(tree_index,))
    boot, feat = root.spawn(2)
    return boot, feat


def bootstrap_indices(seed: int, tree_index: int, n_rows: int) -> np.ndarray:
    boot, _ = tree_seed_sequences(seed, tree_index)
    return np.random.default_rng(boot).integers(0, n_rows, size=n_rows)


class _TreeBuilder:
    def __init__(self, X, y, n_classes, params: ForestParams, rng: np.random.Generator | None):
        self.X = X
        self.y = y
        self.n_classes = n_classes
        self.params = params
        self.rng = rng
        self.n_features = X.shape[1]
        self.k = params.features_per_split(self.n_features)

    def _candidate_features(self, Xn: np.ndarray) -> list[int]:
        varying = Xn.max(axis=0) > Xn.min(axis=0)
        if self.k >= self.n_features or self.rng is None:
            return [f for f in range(self.n_features) if varying[f]]
        # draw until k non-constant features are found; constant ones don't count
        chosen = []
        for f in self.rng.permutation(self.n_features):
            if varying[f]:
                chosen.append(int(f))
                if len(chosen) == self.k:
                    break
        return chosen

    def build(self, idx: np.ndarray, depth: int = 0) -> TreeNode:
        y = self.y[idx]
        counts = np.bincount(y, minlength=self.n_classes)
        leaf = Leaf(tuple(counts.tolist()))
        max_depth = self.params.max_depth
        if (
            len(idx) < self.params.min_samples_split
            or np.count_nonzero(counts) == 1
            or (max_depth is not None and depth >= max_depth)
        ):
            return leaf
        Xn = self.X[idx]
        subset = self._candidate_features(Xn)
        if not subset:
            return leaf
        choice = best_split(Xn, y, subset, self.n_classes)
        if choice is None:
            return leaf
        go_left = Xn[:, choice.feature] <= choice.threshold
        return Split(
            choice.feature,
            choice.threshold,
            leaf.class_counts,
            self.build(idx[go_left], depth + 1),
            self.build(idx[~go_left], depth + 1),
        )


def grow_tree(
    X: np.ndarray, y: np.ndarray, n_classes: int, params: ForestParams, tree_index: int = 0
) -> TreeNode:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    boot_ss, feat_ss = tree_seed_sequences(params.seed, tree_index)
    if params.bootstrap:
        idx = np.random.default_rng(boot_ss).integers(0, len(y), size=len(y))
    else:
        idx = np.arange(len(y))
    builder = _TreeBuilder(X, y, n_classes, params, np.random.default_rng(feat_ss))
    return builder.build(idx)


def tree_importances(root: TreeNode, n_features: int) -> np.ndarray:
    """Mean decrease in impurity for one tree, normalized to sum 1 (zeros if no split)."""
    imp = np.zeros(n_features, dtype=np.float64)
    n_root = root.n_samples
    for node in iter_nodes(root):
        if isinstance(node, Split):
            imp[node.feature] += node.n_samples / n_root * node.impurity_decrease
    total = imp.sum()
    if total > 0:
        imp /= total
    return imp


def forest_importances(trees: Sequence[TreeNode], n_features: int) -> np.ndarray:
    imp = np.mean([tree_importances(t, n_features) for t in trees], axis=0)
    total = imp.sum()
    if total > 0:
        imp = imp / total
    return imp


@dataclass(frozen=True, eq=False)
class ForestModel:
    trees: tuple[TreeNode, ...]
    classes: tuple[CosLabel, ...]
    importances: np.ndarray
    params: ForestParams = field(default_factory=ForestParams)
    train_meta: TrainMeta = field(default_factory=TrainMeta)
    n_features: int = N_FEATURES

    def __post_init__(self) -> None:
        if len(self.trees) < 1:
            raise ValueError("forest needs at least one tree")
        imp = np.array(self.importances, dtype=np.float64).reshape(-1)
        if len(imp) != self.n_features:
            raise ValueError(f"expected {self.n_features} importances, got {len(imp)}")
        imp.setflags(write=False)
        object.__setattr__(self, "trees", tuple(self.trees))
        object.__setattr__(self, "classes", check_label_set(self.classes))
        object.__setattr__(self, "importances", imp)

    def votes(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        votes = np.zeros((len(X), len(self.classes)), dtype=np.int64)
        rows = np.arange(len(X))
        for tree in self.trees:
            votes[rows, predict_tree(tree, X)] += 1
        return votes

    def predict_ids(self, X: np.ndarray) -> np.ndarray:
        """Majority vote; ``argmax`` picks the lowest class id on ties."""
        return self.votes(X).argmax(axis=1)

    def predict(self, v: SegmentVector | Sequence[float] | np.ndarray) -> CosLabel:
        x = v.as_array() if isinstance(v, SegmentVector) else np.asarray(v, dtype=np.float64)
        return self.classes[int(self.predict_ids(x.reshape(1, -1))[0])]

    def predict_matrix(self, matrix: SegmentMatrix) -> np.ndarray:
        """Class ids of this model for every row; matrix labels are mapped by name."""
        return self.predict_ids(matrix.features)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ForestModel):
            return NotImplemented
        return model_to_json(self) == model_to_json(other)

    __hash__ = None  # type: ignore[assignment]


def predict(model: ForestModel, v: SegmentVector) -> CosLabel:
    return model.predict(v)


def feature_importance(model: ForestModel, scaled: bool = False) -> np.ndarray:
    """Stored importances (sum 1), or max-scaled so the top feature reads 1."""
    imp = np.array(model.importances)
    if scaled and imp.max() > 0:
        imp = imp / imp.max()
    return imp


def fit_forest(
    X: np.ndarray,
    y: np.ndarray,
    classes: Sequence[CosLabel],
    params: ForestParams = ForestParams(),
    train_meta: TrainMeta = TrainMeta(),
) -> ForestModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be 2-D with one row per label")
    if len(y) < 2:
        raise ValueError(f"need at least 2 training rows, got {len(y)}")
    classes = check_label_set(classes)
    if y.min() < 0 or y.max() >= len(classes):
        raise ValueError("labels out of range of the class list")
    present = np.unique(y)
    if len(present) < 2:
        raise ValueError(
            f"need at least 2 classes in the training data, got only {classes[int(present[0])].name!r}"
        )
    trees = tuple(grow_tree(X, y, len(classes), params, t) for t in range(params.n_trees))
    return ForestModel(
        trees, classes, forest_importances(trees, X.shape[1]), params, train_meta, X.shape[1]
    )


def train_forest(
    matrix: SegmentMatrix,
    n_trees: int = 10,
    seed: int = 0,
    *,
    max_features: int | None = None,
    bootstrap: bool = True,
    min_samples_split: int = 2,
    max_depth: int | None = None,
    s_t: int | None = None,
    dataset: str = "",
) -> ForestModel:
    if len(matrix) == 0:
        raise ValueError("cannot train on an empty matrix")
    params = ForestParams(n_trees, seed, max_features, bootstrap, min_samples_split, max_depth)
    if s_t is None:
        per_class = set(matrix.class_counts().tolist())
        s_t = per_class.pop() if len(per_class) == 1 else None
    meta = TrainMeta(matrix.n, s_t, seed, dataset)
    return fit_forest(matrix.features, matrix.labels, matrix.classes, params, meta)


# --- persistence -----------------------------------------------------------


class ModelFileError(ValueError):
    pass


class ModelVersionError(ModelFileError):
    pass


def _node_to_dict(node: TreeNode) -> dict:
    if isinstance(node, Leaf):
        return {"counts": list(node.class_counts)}
    return {
        "feature": node.feature,
        "threshold": float(node.threshold),
        "counts": list(node.class_counts),
        "left": _node_to_dict(node.left),
        "right": _node_to_dict(node.right),
    }


def _node_from_dict(data: dict, n_features: int, n_classes: int) -> TreeNode:
    counts = tuple(int(c) for c in data["counts"])
    if len(counts) != n_classes:
        raise ModelFileError(f"node has {len(counts)} class counts, expected {n_classes}")
    if "feature" not in data:
        return Leaf(counts)
    feature = int(data["feature"])
    if not 0 <= feature < n_features:
        raise ModelFileError(f"split feature {feature} out of range 0..{n_features - 1}")
    return Split(
        feature,
        float(data["threshold"]),
        counts,
        _node_from_dict(data["left"], n_features, n_classes),
        _node_from_dict(data["right"], n_features, n_classes),
    )


def model_to_dict(model: ForestModel) -> dict:
    names = list(FEATURE_NAMES) if model.n_features == N_FEATURES else [f"f{i}" for i in range(model.n_features)]
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "n_features": model.n_features,
        "feature_names": names,
        "classes": [{"id": c.id, "name": c.name} for c in model.classes],
        "params": asdict(model.params),
        "train_meta": asdict(model.train_meta),
        "importances": [float(v) for v in model.importances],
        "trees": [_node_to_dict(t) for t in model.trees],
    }


def model_to_json(model: ForestModel) -> str:
    return json.dumps(model_to_dict(model), separators=(",", ":")) + "\n"


def model_from_dict(doc: dict, n_features: int | None = N_FEATURES) -> ForestModel:
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ModelFileError("not a cosseg forest model")
    version = doc.get("version")
    if version not in SUPPORTED_VERSIONS:
        raise ModelVersionError(
            f"unsupported model version {version!r}; supported versions: "
            + ", ".join(str(v) for v in SUPPORTED_VERSIONS)
        )
    try:
        stored = int(doc["n_features"])
        if n_features is not None and stored != n_features:
            raise ModelFileError(f"model has {stored} features, expected {n_features}")
        classes = tuple(CosLabel(int(c["id"]), str(c["name"])) for c in doc["classes"])
        trees = tuple(_node_from_dict(t, stored, len(classes)) for t in doc["trees"])
        return ForestModel(
            trees,
            classes,
            np.array(doc["importances"], dtype=np.float64),
            ForestParams(**doc["params"]),
            TrainMeta(**doc["train_meta"]),
            stored,
        )
    except ModelFileError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"corrupt model document: {exc}") from None


def save_model(model: ForestModel, path: str | Path) -> None:
    Path(path).write_text(model_to_json(model), encoding="utf-8")


def load_model(path: str | Path, n_features: int | None = N_FEATURES) -> ForestModel:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFileError(f"{path}: corrupt model file ({exc})") from None
    try:
        return model_from_dict(doc, n_features)
    except ModelFileError as exc:
        raise type(exc)(f"{path}: {exc}") from None
