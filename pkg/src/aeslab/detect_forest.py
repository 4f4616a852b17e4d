"""Random-forest detector built from CART trees with Gini impurity.

Feature vectors have 17 entries: the block latency in microseconds followed
by the 16 bytes the pipeline saw (post-fault plaintext by default, or
ciphertext). Trees grow greedily: at each node a without-replacement sample
of candidate features is scored over midpoint thresholds between
consecutive distinct sorted values, and the split with the highest Gini
gain wins. Ties resolve to the lowest feature index, then the lowest
threshold; a node with no strictly positive gain becomes a leaf.

Everything is deterministic given (hyperparams, training data): each tree
draws its bootstrap sample and feature subsets from a generator derived
from the forest seed and the tree index.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import IO, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .cipher import BlockRecord

N_FEATURES = 17

_STREAM_SPLIT = 3
_STREAM_TREE = 4


class ByteSource(enum.Enum):
    PLAINTEXT = "plaintext"
    CIPHERTEXT = "ciphertext"


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    label: bool


@dataclass(frozen=True)
class ForestHyperparams:
    n_trees: int = 101
    max_depth: Optional[int] = 16
    min_samples_split: int = 2
    features_per_split: int = 5  # ceil(sqrt(17))
    seed: int = 1
    train_fraction: float = 0.7

    def validate(self) -> None:
        if self.n_trees < 1:
            raise ValueError("n_trees must be at least 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be None or non-negative")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be at least 2")
        if self.features_per_split < 1:
            raise ValueError("features_per_split must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a non-negative 64-bit integer")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie strictly between 0 and 1")


@dataclass
class TreeNode:
    """Internal node (feature_index/threshold/children) or leaf (class_counts)."""

    feature_index: Optional[int] = None
    threshold: Optional[float] = None
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None
    class_counts: Optional[Tuple[int, int]] = None

    @property
    def is_leaf(self) -> bool:
        return self.class_counts is not None


@dataclass(frozen=True)
class ForestModel:
    trees: Tuple[TreeNode, ...]
    hyper: ForestHyperparams
    n_features: int


def build_dataset(
    records: Sequence[BlockRecord],
    byte_source: ByteSource = ByteSource.PLAINTEXT,
) -> List[FeatureVector]:
    """One 17-entry vector per record, ordered by block index."""
    if not records:
        raise ValueError("cannot build features from an empty run")
    vectors: List[FeatureVector] = []
    for rec in sorted(records, key=lambda r: r.index):
        payload = rec.plaintext if byte_source is ByteSource.PLAINTEXT else rec.ciphertext
        values = np.empty(N_FEATURES, dtype=np.float64)
        values[0] = rec.time_us
        values[1:] = np.frombuffer(payload, dtype=np.uint8)
        vectors.append(FeatureVector(values, rec.truth_label))
    return vectors


@dataclass(frozen=True)
class SplitResult:
    """Stratified partition; iterates as (train, test) and keeps source indices."""

    train: List[FeatureVector]
    test: List[FeatureVector]
    train_indices: List[int]
    test_indices: List[int]

    def __iter__(self) -> Iterator[List[FeatureVector]]:
        yield self.train
        yield self.test


def split_train_test(
    data: Sequence[FeatureVector], train_fraction: float, seed: int
) -> SplitResult:
    """Shuffle each class separately and cut it at round(fraction * count).

    The per-class train count is clamped to [1, count - 1] so every class
    present lands in both partitions. A class with fewer than 2 samples
    cannot be stratified and raises.
    """
    if not data:
        raise ValueError("cannot split an empty dataset")
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    by_class = {False: [], True: []}
    for i, vec in enumerate(data):
        by_class[bool(vec.label)].append(i)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_STREAM_SPLIT,)))
    train_idx: List[int] = []
    test_idx: List[int] = []
    for cls in (False, True):
        idx = by_class[cls]
        if not idx:
            continue
        if len(idx) < 2:
            raise ValueError(f"stratified split needs at least 2 samples of class {cls}")
        perm = rng.permutation(np.asarray(idx, dtype=np.int64))
        n_train = min(max(round(train_fraction * len(idx)), 1), len(idx) - 1)
        train_idx.extend(int(j) for j in perm[:n_train])
        test_idx.extend(int(j) for j in perm[n_train:])
    train_idx.sort()
    test_idx.sort()
    return SplitResult(
        [data[i] for i in train_idx],
        [data[i] for i in test_idx],
        train_idx,
        test_idx,
    )


def gini(class_counts: Tuple[int, int]) -> float:
    """Gini impurity 1 - sum(p^2); an empty node counts as pure."""
    c0, c1 = class_counts
    total = c0 + c1
    if total == 0:
        return 0.0
    p0 = c0 / total
    p1 = c1 / total
    return 1.0 - (p0 * p0 + p1 * p1)


@dataclass(frozen=True)
class Split:
    feature_index: int
    threshold: float
    gain: float


def _gini_vec(c0: np.ndarray, c1: np.ndarray, total: np.ndarray) -> np.ndarray:
    p0 = c0 / total
    p1 = c1 / total
    return 1.0 - (p0 * p0 + p1 * p1)


def _best_split_arrays(X: np.ndarray, y: np.ndarray, features: Sequence[int]) -> Optional[Split]:
    n = y.size
    total1 = int(y.sum())
    total0 = n - total1
    parent = gini((total0, total1))
    best: Optional[Split] = None
    for f in features:
        col = X[:, f]
        order = np.argsort(col, kind="stable")
        v = col[order]
        lab = y[order]
        boundary = np.nonzero(v[:-1] < v[1:])[0]
        if boundary.size == 0:
            continue
        mids = (v[boundary] + v[boundary + 1]) / 2.0
        # left set is {value <= mid}; duplicates and midpoint rounding are
        # absorbed by counting against the sorted column itself
        n_left = np.searchsorted(v, mids, side="right")
        keep = (n_left > 0) & (n_left < n)
        if not keep.any():
            continue
        mids = mids[keep]
        n_left = n_left[keep]
        cum1 = np.cumsum(lab)
        left1 = cum1[n_left - 1]
        left0 = n_left - left1
        right1 = total1 - left1
        right0 = total0 - left0
        n_right = n - n_left
        child = n_left * _gini_vec(left0, left1, n_left) + n_right * _gini_vec(right0, right1, n_right)
        gains = parent - child / n
        pick = int(np.argmax(gains))
        gain = float(gains[pick])
        if best is None or gain > best.gain:
            best = Split(int(f), float(mids[pick]), gain)
    if best is None or not best.gain > 0.0:
        return None
    return best


def best_split(
    samples: Sequence[FeatureVector], candidate_features: Sequence[int]
) -> Optional[Split]:
    """Highest-gain (feature, threshold) over the candidates, or None.

    Ties break to the lowest feature index, then the lowest threshold.
    Returns None when no candidate split has gain strictly above zero.
    """
    if not samples:
        raise ValueError("cannot split an empty sample set")
    X = np.asarray([s.values for s in samples], dtype=np.float64)
    y = np.asarray([s.label for s in samples], dtype=np.int64)
    feats = sorted({int(f) for f in candidate_features})
    if not feats:
        raise ValueError("candidate_features must not be empty")
    if feats[0] < 0 or feats[-1] >= X.shape[1]:
        raise ValueError("candidate feature index out of range")
    return _best_split_arrays(X, y, feats)


def _grow(
    X: np.ndarray,
    y: np.ndarray,
    hyper: ForestHyperparams,
    rng: np.random.Generator,
    depth: int,
) -> TreeNode:
    c1 = int(y.sum())
    c0 = y.size - c1
    if (
        c0 == 0
        or c1 == 0
        or y.size < hyper.min_samples_split
        or (hyper.max_depth is not None and depth >= hyper.max_depth)
    ):
        return TreeNode(class_counts=(c0, c1))
    d = X.shape[1]
    k = min(hyper.features_per_split, d)
    feats = np.sort(rng.choice(d, size=k, replace=False))
    split = _best_split_arrays(X, y, feats)
    if split is None:
        return TreeNode(class_counts=(c0, c1))
    mask = X[:, split.feature_index] <= split.threshold
    left = _grow(X[mask], y[mask], hyper, rng, depth + 1)
    right = _grow(X[~mask], y[~mask], hyper, rng, depth + 1)
    return TreeNode(feature_index=split.feature_index, threshold=split.threshold, left=left, right=right)


def fit_tree(
    samples: Sequence[FeatureVector], hyper: ForestHyperparams, rng: np.random.Generator
) -> TreeNode:
    """Grow one CART tree on the given samples, drawing features from rng."""
    if not samples:
        raise ValueError("cannot fit a tree on an empty sample set")
    X = np.asarray([s.values for s in samples], dtype=np.float64)
    y = np.asarray([s.label for s in samples], dtype=np.int64)
    return _grow(X, y, hyper, rng, 0)


def _tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_STREAM_TREE, tree_index)))


def fit_forest(train: Sequence[FeatureVector], hyper: ForestHyperparams) -> ForestModel:
    """Fit n_trees trees, each on its own bootstrap resample of train."""
    hyper.validate()
    if not train:
        raise ValueError("cannot fit a forest on an empty training set")
    labels = {bool(v.label) for v in train}
    if len(labels) < 2:
        raise ValueError("training set must contain both classes")
    widths = {len(v.values) for v in train}
    if len(widths) != 1:
        raise ValueError("training vectors must share one feature count")
    X = np.asarray([s.values for s in train], dtype=np.float64)
    y = np.asarray([s.label for s in train], dtype=np.int64)
    n = y.size
    trees = []
    for t in range(hyper.n_trees):
        rng = _tree_rng(hyper.seed, t)
        boot = rng.integers(0, n, size=n)
        trees.append(_grow(X[boot], y[boot], hyper, rng, 0))
    return ForestModel(tuple(trees), hyper, int(X.shape[1]))


def _tree_vote(root: TreeNode, values: np.ndarray) -> bool:
    node = root
    while not node.is_leaf:
        node = node.left if values[node.feature_index] <= node.threshold else node.right
    c0, c1 = node.class_counts
    return c1 > c0  # ties vote benign


def predict(model: ForestModel, vector: FeatureVector) -> bool:
    """Majority vote over all trees; an exact tie stays benign."""
    values = np.asarray(vector.values, dtype=np.float64)
    if values.shape != (model.n_features,):
        raise ValueError(f"expected {model.n_features} features, got shape {values.shape}")
    votes = sum(_tree_vote(root, values) for root in model.trees)
    return 2 * votes > len(model.trees)


def predict_all(model: ForestModel, vectors: Sequence[FeatureVector]) -> List[bool]:
    return [predict(model, v) for v in vectors]


MODEL_MAGIC = "aeslab-forest"
MODEL_VERSION = 1


class ModelFormatError(ValueError):
    """Model file is missing, malformed, or from an unsupported version."""


def _write_node(node: TreeNode, out: IO[str]) -> None:
    if node.is_leaf:
        c0, c1 = node.class_counts
        out.write(f"l {c0} {c1}\n")
    else:
        out.write(f"i {node.feature_index} {node.threshold!r}\n")
        _write_node(node.left, out)
        _write_node(node.right, out)


def save_model(model: ForestModel, path: str) -> None:
    """Write a versioned line-oriented text dump (floats via repr, pre-order trees)."""
    hyper = model.hyper
    with open(path, "w", encoding="ascii") as out:
        out.write(f"{MODEL_MAGIC} {MODEL_VERSION}\n")
        out.write(f"n_features {model.n_features}\n")
        out.write(f"n_trees {hyper.n_trees}\n")
        out.write(f"max_depth {'none' if hyper.max_depth is None else hyper.max_depth}\n")
        out.write(f"min_samples_split {hyper.min_samples_split}\n")
        out.write(f"features_per_split {hyper.features_per_split}\n")
        out.write(f"seed {hyper.seed}\n")
        out.write(f"train_fraction {hyper.train_fraction!r}\n")
        for i, tree in enumerate(model.trees):
            out.write(f"tree {i}\n")
            _write_node(tree, out)
        out.write("end\n")


def _read_node(lines: Iterator[str]) -> TreeNode:
    try:
        parts = next(lines).split()
    except StopIteration:
        raise ModelFormatError("model file ended inside a tree") from None
    if parts and parts[0] == "l" and len(parts) == 3:
        return TreeNode(class_counts=(int(parts[1]), int(parts[2])))
    if parts and parts[0] == "i" and len(parts) == 3:
        left = _read_node(lines)
        right = _read_node(lines)
        return TreeNode(feature_index=int(parts[1]), threshold=float(parts[2]), left=left, right=right)
    raise ModelFormatError(f"unrecognized node line: {' '.join(parts)!r}")


def _parse_header_field(lines: Iterator[str], name: str) -> str:
    try:
        parts = next(lines).split()
    except StopIteration:
        raise ModelFormatError("model file ended inside the header") from None
    if len(parts) != 2 or parts[0] != name:
        raise ModelFormatError(f"expected header field {name!r}, got {' '.join(parts)!r}")
    return parts[1]


def load_model(path: str) -> ForestModel:
    """Re-read a save_model dump; refuses other versions or malformed files."""
    with open(path, "r", encoding="ascii") as handle:
        lines = iter(handle.read().splitlines())
    try:
        first = next(lines).split()
    except StopIteration:
        raise ModelFormatError("model file is empty") from None
    if len(first) != 2 or first[0] != MODEL_MAGIC:
        raise ModelFormatError("not a forest model file")
    if first[1] != str(MODEL_VERSION):
        raise ModelFormatError(f"unsupported model format version {first[1]}")
    n_features = int(_parse_header_field(lines, "n_features"))
    n_trees = int(_parse_header_field(lines, "n_trees"))
    raw_depth = _parse_header_field(lines, "max_depth")
    max_depth = None if raw_depth == "none" else int(raw_depth)
    min_split = int(_parse_header_field(lines, "min_samples_split"))
    per_split = int(_parse_header_field(lines, "features_per_split"))
    seed = int(_parse_header_field(lines, "seed"))
    train_fraction = float(_parse_header_field(lines, "train_fraction"))
    hyper = ForestHyperparams(n_trees, max_depth, min_split, per_split, seed, train_fraction)
    trees = []
    for i in range(n_trees):
        marker = _parse_header_field(lines, "tree")
        if marker != str(i):
            raise ModelFormatError(f"expected tree {i}, got {marker!r}")
        trees.append(_read_node(lines))
    tail = list(lines)
    if tail != ["end"]:
        raise ModelFormatError("model file has trailing garbage or a missing end marker")
    return ForestModel(tuple(trees), hyper, n_features)
