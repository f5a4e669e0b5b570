"""Random decision forest for active-vs-passive trajectory classification.

Written in-tree rather than wrapping a library so that training is bit-for-bit
reproducible from a single seed (per-tree randomness is pre-derived, so serial
and threaded training build identical forests) and so that the serialized
model layout stays stable across library upgrades.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .descriptors import DescriptorVariant, FeatureVector
from .util import child_seed, thread_map

MODEL_FORMAT = "naop-forest"
MODEL_FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    """Model file is truncated, corrupt, or has an unsupported version."""


class ModelDataMismatch(ValueError):
    """Input features do not match the model's descriptor variant or shape."""


@dataclass(frozen=True)
class TrainConfig:
    n_trees: int = 25
    max_depth: int | None = None
    features_per_split: int | None = None  # None -> ceil(sqrt(d)) at fit time
    bootstrap: bool = True
    min_samples_leaf: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.min_samples_leaf < 1:
            raise ValueError(
                f"min_samples_leaf must be >= 1, got {self.min_samples_leaf}"
            )


@dataclass
class Tree:
    """Flat node arrays; feature == -1 marks a leaf.

    A sample goes left when x[feature] <= threshold. ``value`` holds the
    fraction of active training samples at the node, ``count`` the number of
    training samples that reached it.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    count: np.ndarray

    def n_nodes(self) -> int:
        return len(self.feature)


@dataclass
class Forest:
    trees: list[Tree]
    variant: DescriptorVariant
    h: int
    d: int
    seed: int
    config: TrainConfig = field(default_factory=TrainConfig)

    @property
    def n_trees(self) -> int:
        return len(self.trees)


def balance(X: np.ndarray, y: np.ndarray, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Subsample the passive class to match the active count.

    Actives are always all retained; passives become a uniform random subset,
    deterministic given the seed. Original sample order is preserved.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(bool)
    pos = np.flatnonzero(y)
    neg = np.flatnonzero(~y)
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("balance requires at least one sample of each class")
    if len(neg) < len(pos):
        warnings.warn(
            f"fewer passive ({len(neg)}) than active ({len(pos)}) samples; "
            f"returning the set unchanged",
            stacklevel=2,
        )
        return X.copy(), y.copy()
    if len(neg) == len(pos):
        return X.copy(), y.copy()
    rng = np.random.default_rng(child_seed(seed, "balance"))
    chosen = rng.choice(len(neg), size=len(pos), replace=False)
    keep = np.sort(np.concatenate([pos, neg[chosen]]))
    return X[keep], y[keep]


def _gini_pair(n_pos_left, n_left, n_pos_total, n_total):
    """Weighted Gini impurity of a left/right split, vectorized over splits."""
    n_right = n_total - n_left
    pl = n_pos_left / n_left
    pr = (n_pos_total - n_pos_left) / n_right
    return (n_left * 2.0 * pl * (1.0 - pl) + n_right * 2.0 * pr * (1.0 - pr)) / n_total


def find_best_split(
    X: np.ndarray,
    y: np.ndarray,
    feature_indices,
    min_samples_leaf: int = 1,
) -> tuple[int, float, float] | None:
    """Best (feature, threshold, impurity) over the candidate features.

    Thresholds are midpoints between consecutive distinct sorted values.
    Ties break toward the earliest candidate feature, then toward the
    smaller threshold. Returns None when no feature admits a split.
    """
    n = len(y)
    n_pos_total = int(np.sum(y))
    best: tuple[float, int, float] | None = None
    for f in feature_indices:
        col = X[:, f]
        order = np.argsort(col, kind="stable")
        cs = col[order]
        if cs[0] == cs[-1]:
            continue
        ys = y[order].astype(np.float64)
        pos_cum = np.cumsum(ys)[:-1]
        n_left = np.arange(1, n, dtype=np.float64)
        boundary = cs[1:] > cs[:-1]
        valid = boundary & (n_left >= min_samples_leaf) & ((n - n_left) >= min_samples_leaf)
        if not np.any(valid):
            continue
        imp = _gini_pair(pos_cum, n_left, n_pos_total, n)
        imp = np.where(valid, imp, np.inf)
        j = int(np.argmin(imp))
        if best is None or imp[j] < best[0]:
            best = (float(imp[j]), int(f), float((cs[j] + cs[j + 1]) / 2.0))
    if best is None:
        return None
    impurity, feature, threshold = best
    return feature, threshold, impurity


def _grow_tree(X: np.ndarray, y: np.ndarray, config: TrainConfig, k: int,
               rng: np.random.Generator) -> Tree:
    n, d = X.shape
    if config.bootstrap:
        sample = rng.integers(0, n, size=n)
    else:
        sample = np.arange(n)
    Xb, yb = X[sample], y[sample]

    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []
    count: list[int] = []

    def new_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        count.append(0)
        return len(feature) - 1

    root = new_node()
    # Depth-first, left child first, so the candidate-feature draws happen in
    # a fixed order regardless of how trees are scheduled.
    stack: list[tuple[np.ndarray, int, int]] = [(np.arange(len(yb)), 0, root)]
    while stack:
        idx, depth, ni = stack.pop()
        yn = yb[idx]
        n_node = len(idx)
        n_pos = int(np.sum(yn))
        value[ni] = n_pos / n_node
        count[ni] = n_node
        pure = n_pos == 0 or n_pos == n_node
        depth_capped = config.max_depth is not None and depth >= config.max_depth
        if pure or depth_capped or n_node < 2 * config.min_samples_leaf or n_node < 2:
            continue
        cand = rng.choice(d, size=k, replace=False)
        split = find_best_split(Xb[idx], yn, cand, config.min_samples_leaf)
        if split is None:
            continue
        f, thr, _ = split
        go_left = Xb[idx, f] <= thr
        li = new_node()
        ri = new_node()
        feature[ni] = f
        threshold[ni] = thr
        left[ni] = li
        right[ni] = ri
        stack.append((idx[~go_left], depth + 1, ri))
        stack.append((idx[go_left], depth + 1, li))
    return Tree(
        feature=np.array(feature, dtype=np.int32),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.int32),
        right=np.array(right, dtype=np.int32),
        value=np.array(value, dtype=np.float64),
        count=np.array(count, dtype=np.int64),
    )


def train(
    X: np.ndarray,
    y: np.ndarray,
    config: TrainConfig,
    *,
    variant: DescriptorVariant,
    h: int,
    threads: int | None = None,
) -> Forest:
    """Grow a forest on (n, d) features with boolean active labels.

    Fully deterministic given the config seed: every tree derives its own
    generator from it, so thread scheduling cannot change the result.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(bool)
    if X.ndim != 2 or len(X) == 0:
        raise ValueError(f"need a nonempty (n, d) feature matrix, got shape {X.shape}")
    if len(X) != len(y):
        raise ValueError(f"feature/label length mismatch: {len(X)} vs {len(y)}")
    if not np.all(np.isfinite(X)):
        raise ValueError("features contain non-finite values")
    if not (np.any(y) and np.any(~y)):
        raise ValueError("training data must contain both classes")
    d = X.shape[1]
    k = config.features_per_split or math.ceil(math.sqrt(d))
    if not (1 <= k <= d):
        raise ValueError(f"features_per_split must be in [1, {d}], got {k}")

    def build(t: int) -> Tree:
        rng = np.random.default_rng(child_seed(config.seed, "tree", t))
        return _grow_tree(X, y, config, k, rng)

    trees = thread_map(build, range(config.n_trees), threads)
    return Forest(trees, variant, h, d, config.seed, config)


def _tree_values(tree: Tree, X: np.ndarray) -> np.ndarray:
    node = np.zeros(len(X), dtype=np.int32)
    pending = tree.feature[node] >= 0
    rows = np.flatnonzero(pending)
    while len(rows):
        cur = node[rows]
        f = tree.feature[cur]
        go_left = X[rows, f] <= tree.threshold[cur]
        nxt = np.where(go_left, tree.left[cur], tree.right[cur])
        node[rows] = nxt
        rows = rows[tree.feature[nxt] >= 0]
    return tree.value[node]


def predict_proba_matrix(forest: Forest, X: np.ndarray) -> np.ndarray:
    """Mean leaf active-fraction over the trees, per row of X."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != forest.d:
        raise ModelDataMismatch(
            f"model expects {forest.d}-dimensional features, got shape {X.shape}"
        )
    acc = np.zeros(len(X), dtype=np.float64)
    for tree in forest.trees:
        acc += _tree_values(tree, X)
    return acc / forest.n_trees


def predict_proba(forest: Forest, x: FeatureVector) -> float:
    if x.variant is not forest.variant or x.h != forest.h:
        raise ModelDataMismatch(
            f"feature vector ({x.variant.value}, h={x.h}) does not match model "
            f"({forest.variant.value}, h={forest.h})"
        )
    return float(predict_proba_matrix(forest, x.values[None, :])[0])


@dataclass(frozen=True)
class ThresholdModel:
    """Classify by motion magnitude: active iff magnitude >= threshold."""

    threshold: float
    polarity: str = "above"

    def __post_init__(self):
        if not math.isfinite(self.threshold):
            raise ValueError(f"threshold must be finite, got {self.threshold}")

    def classify(self, magnitudes) -> np.ndarray:
        return np.asarray(magnitudes, dtype=np.float64) >= self.threshold


def fit_threshold(magnitudes, labels, seed: int) -> ThresholdModel:
    """Pick the magnitude threshold maximizing balanced training accuracy.

    The passive class is subsampled to match the actives (seeded), then every
    midpoint between consecutive sorted magnitudes is scanned; ties break
    toward the smaller threshold.
    """
    m = np.asarray(magnitudes, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    if m.ndim != 1 or len(m) != len(y):
        raise ValueError("magnitudes and labels must be equal-length 1-D")
    mb, yb = balance(m[:, None], y, seed)
    mb = mb[:, 0]
    order = np.argsort(mb, kind="stable")
    ms = mb[order]
    candidates = np.unique((ms[:-1] + ms[1:]) / 2.0)
    best_t = float(candidates[0])
    best_acc = -1.0
    n = len(mb)
    for t in candidates:
        acc = (np.sum(yb[mb >= t]) + np.sum(~yb[mb < t])) / n
        if acc > best_acc:
            best_acc = float(acc)
            best_t = float(t)
    return ThresholdModel(best_t)


def save_model(forest: Forest) -> bytes:
    """Serialize to the self-describing JSON container (see README for layout)."""
    payload = {
        "format": MODEL_FORMAT,
        "format_version": MODEL_FORMAT_VERSION,
        "variant": forest.variant.value,
        "h": forest.h,
        "d": forest.d,
        "n_trees": forest.n_trees,
        "seed": forest.seed,
        "config": {
            "n_trees": forest.config.n_trees,
            "max_depth": forest.config.max_depth,
            "features_per_split": forest.config.features_per_split,
            "bootstrap": forest.config.bootstrap,
            "min_samples_leaf": forest.config.min_samples_leaf,
            "seed": forest.config.seed,
        },
        "trees": [
            {
                "feature": t.feature.tolist(),
                "threshold": t.threshold.tolist(),
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "value": t.value.tolist(),
                "count": t.count.tolist(),
            }
            for t in forest.trees
        ],
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")


def load_model(data: bytes) -> Forest:
    try:
        payload = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"truncated or corrupt model file: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != MODEL_FORMAT:
        raise ModelFormatError("not a forest model file")
    version = payload.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ModelFormatError(
            f"unsupported model format version {version!r} "
            f"(expected {MODEL_FORMAT_VERSION})"
        )
    try:
        variant = DescriptorVariant(payload["variant"])
        h = int(payload["h"])
        d = int(payload["d"])
        seed = int(payload["seed"])
        cfg = payload.get("config", {})
        config = TrainConfig(
            n_trees=int(cfg.get("n_trees", payload["n_trees"])),
            max_depth=cfg.get("max_depth"),
            features_per_split=cfg.get("features_per_split"),
            bootstrap=bool(cfg.get("bootstrap", True)),
            min_samples_leaf=int(cfg.get("min_samples_leaf", 1)),
            seed=int(cfg.get("seed", seed)),
        )
        trees = []
        for raw in payload["trees"]:
            tree = Tree(
                feature=np.array(raw["feature"], dtype=np.int32),
                threshold=np.array(raw["threshold"], dtype=np.float64),
                left=np.array(raw["left"], dtype=np.int32),
                right=np.array(raw["right"], dtype=np.int32),
                value=np.array(raw["value"], dtype=np.float64),
                count=np.array(raw["count"], dtype=np.int64),
            )
            n = tree.n_nodes()
            lengths = {len(tree.threshold), len(tree.left), len(tree.right),
                       len(tree.value), len(tree.count)}
            if lengths != {n}:
                raise ModelFormatError("inconsistent tree array lengths")
            internal = tree.feature >= 0
            if np.any(tree.feature >= d):
                raise ModelFormatError("tree references a feature beyond d")
            kids = np.concatenate([tree.left[internal], tree.right[internal]])
            if len(kids) and (kids.min() < 0 or kids.max() >= n):
                raise ModelFormatError("tree child index out of range")
            trees.append(tree)
        if len(trees) != int(payload["n_trees"]):
            raise ModelFormatError("tree count does not match header")
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model payload: {exc}") from exc
    return Forest(trees, variant, h, d, seed, config)


def save_model_file(forest: Forest, path) -> None:
    with open(path, "wb") as fh:
        fh.write(save_model(forest))


def load_model_file(path) -> Forest:
    with open(path, "rb") as fh:
        return load_model(fh.read())
