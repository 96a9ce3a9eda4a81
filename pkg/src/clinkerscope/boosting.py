"""Gradient boosted decision trees for per-pixel phase labelling.

One-vs-rest boosting on the logistic loss. Each round fits one regression
tree per class to the Newton gradients, with leaf weights -G/H scaled by the
learning rate. Split search is exact greedy over the sorted unique values of
each feature, aggregated with histogram counts so a level of the tree costs
one pass over the data per feature.

Training is deterministic: rows are brought into a canonical order first
(sorted by feature columns, then label), so shuffling the input changes
nothing, and the only randomness is the seeded row subsampling.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

_EPS = 1e-12


@dataclass(frozen=True)
class GbdtParams:
    """Hyperparameters of one boosted ensemble (shared by all classes)."""

    trees: int = 100
    depth: int = 4
    learning_rate: float = 0.1
    subsample: float = 1.0
    min_leaf: int = 5

    def __post_init__(self) -> None:
        if self.trees < 1:
            raise DataError(f"tree count must be positive, got {self.trees}")
        if self.depth < 1:
            raise DataError(f"depth must be positive, got {self.depth}")
        if self.learning_rate <= 0:
            raise DataError(f"learning rate must be positive, got {self.learning_rate}")
        if not (0.0 < self.subsample <= 1.0):
            raise DataError(f"subsample must be in (0, 1], got {self.subsample}")
        if self.min_leaf < 1:
            raise DataError(f"min leaf size must be positive, got {self.min_leaf}")

    def to_dict(self) -> dict:
        return {
            "trees": self.trees,
            "depth": self.depth,
            "learning_rate": self.learning_rate,
            "subsample": self.subsample,
            "min_leaf": self.min_leaf,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GbdtParams":
        known = {"trees", "depth", "learning_rate", "subsample", "min_leaf"}
        extra = set(d) - known
        if extra:
            raise DataError(f"unknown model parameter {sorted(extra)[0]!r}")
        return cls(**d)


@dataclass(eq=False)
class Tree:
    """A regression tree in flat-array form; feature -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int32)
        while True:
            f = self.feature[node]
            live = np.flatnonzero(f >= 0)
            if live.size == 0:
                return self.value[node]
            n = node[live]
            goes_left = X[live, f[live]] <= self.threshold[n]
            node[live] = np.where(goes_left, self.left[n], self.right[n])

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            feature=np.asarray(d["feature"], dtype=np.int32),
            threshold=np.asarray(d["threshold"], dtype=np.float64),
            left=np.asarray(d["left"], dtype=np.int32),
            right=np.asarray(d["right"], dtype=np.int32),
            value=np.asarray(d["value"], dtype=np.float64),
        )


class _TreeBuilder:
    def __init__(self) -> None:
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    def new_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def done(self) -> Tree:
        return Tree(
            feature=np.asarray(self.feature, dtype=np.int32),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int32),
            right=np.asarray(self.right, dtype=np.int32),
            value=np.asarray(self.value, dtype=np.float64),
        )


def _grow_tree(
    Xb: np.ndarray,
    thresholds: list[np.ndarray],
    rows: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    y01: np.ndarray,
    params: GbdtParams,
) -> Tree:
    """Level-wise exact-greedy growth on prebinned features.

    Splits are taken whenever a candidate satisfies the leaf-size floor, even
    at zero gain; label-pure nodes stop early. Ties go to the lowest feature
    index, then the lowest threshold.
    """
    tb = _TreeBuilder()
    root = tb.new_node()
    frontier = [root]
    node_of = np.zeros(rows.size, dtype=np.int64)
    cur = rows
    n_features = Xb.shape[1]
    for level in range(params.depth):
        k = len(frontier)
        gs = np.bincount(node_of, weights=g[cur], minlength=k)
        hs = np.bincount(node_of, weights=h[cur], minlength=k)
        ns = np.bincount(node_of, minlength=k)
        pos = np.bincount(node_of, weights=y01[cur], minlength=k)
        pure = (pos == 0) | (pos == ns)
        best_score = np.full(k, -np.inf)
        best_feat = np.full(k, -1, dtype=np.int64)
        best_bin = np.zeros(k, dtype=np.int64)
        for j in range(n_features):
            nb = len(thresholds[j]) + 1
            if nb < 2:
                continue
            key = node_of * nb + Xb[cur, j]
            cg = np.bincount(key, weights=g[cur], minlength=k * nb).reshape(k, nb)
            ch = np.bincount(key, weights=h[cur], minlength=k * nb).reshape(k, nb)
            cn = np.bincount(key, minlength=k * nb).reshape(k, nb)
            Gl = np.cumsum(cg, axis=1)[:, :-1]
            Hl = np.cumsum(ch, axis=1)[:, :-1]
            Nl = np.cumsum(cn, axis=1)[:, :-1]
            Gr = gs[:, None] - Gl
            Hr = hs[:, None] - Hl
            Nr = ns[:, None] - Nl
            score = Gl * Gl / np.maximum(Hl, _EPS) + Gr * Gr / np.maximum(Hr, _EPS)
            score[(Nl < params.min_leaf) | (Nr < params.min_leaf)] = -np.inf
            cand = np.argmax(score, axis=1)
            cand_score = score[np.arange(k), cand]
            better = cand_score > best_score
            best_score[better] = cand_score[better]
            best_feat[better] = j
            best_bin[better] = cand[better]
        split = np.isfinite(best_score) & ~pure
        slot_to_child = np.full(k, -1, dtype=np.int64)
        next_frontier: list[int] = []
        for i in range(k):
            node = frontier[i]
            if not split[i]:
                tb.value[node] = -gs[i] / max(hs[i], _EPS) * params.learning_rate
                continue
            f = int(best_feat[i])
            tb.feature[node] = f
            tb.threshold[node] = float(thresholds[f][best_bin[i]])
            l, r = tb.new_node(), tb.new_node()
            tb.left[node], tb.right[node] = l, r
            slot_to_child[i] = len(next_frontier)
            next_frontier.extend([l, r])
        if not next_frontier:
            break
        keep = split[node_of]
        cur = cur[keep]
        slots = node_of[keep]
        goes_left = np.zeros(cur.size, dtype=bool)
        for f in np.unique(best_feat[split]):
            sel = best_feat[slots] == f
            goes_left[sel] = Xb[cur[sel], f] <= best_bin[slots[sel]]
        node_of = slot_to_child[slots] + np.where(goes_left, 0, 1)
        frontier = next_frontier
    else:
        # depth exhausted: settle whatever is still on the frontier
        k = len(frontier)
        gs = np.bincount(node_of, weights=g[cur], minlength=k)
        hs = np.bincount(node_of, weights=h[cur], minlength=k)
        for i, node in enumerate(frontier):
            if tb.feature[node] < 0:
                tb.value[node] = -gs[i] / max(hs[i], _EPS) * params.learning_rate
    return tb.done()


@dataclass(eq=False)
class GbdtModel:
    """A trained one-vs-rest ensemble."""

    classes: list[int]
    feature_width: int
    params: GbdtParams
    base_scores: list[float]
    ensembles: list[list[Tree]]
    train_loss: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        if sorted(self.classes) != self.classes or len(set(self.classes)) != len(self.classes):
            raise DataError("model classes must be sorted and unique")
        if len(self.ensembles) != len(self.classes) or len(self.base_scores) != len(self.classes):
            raise DataError("model arrays disagree on the number of classes")

    def _check(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.feature_width:
            raise DataError(
                f"expected (n, {self.feature_width}) features, got shape {X.shape}"
            )
        return X

    def scores(self, X: np.ndarray) -> np.ndarray:
        """Additive margins, one column per class."""
        X = self._check(X)
        out = np.tile(np.asarray(self.base_scores, dtype=np.float64), (X.shape[0], 1))
        for ci, trees in enumerate(self.ensembles):
            for tree in trees:
                out[:, ci] += tree.predict(X)
        return out

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Class labels; score ties resolve to the lowest class id."""
        s = self.scores(X)
        cls = np.asarray(self.classes)
        return cls[np.argmax(s, axis=1)]

    def to_dict(self) -> dict:
        return {
            "classes": self.classes,
            "feature_width": self.feature_width,
            "params": self.params.to_dict(),
            "base_scores": self.base_scores,
            "train_loss": self.train_loss,
            "trees": [[t.to_dict() for t in trees] for trees in self.ensembles],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GbdtModel":
        try:
            return cls(
                classes=[int(c) for c in d["classes"]],
                feature_width=int(d["feature_width"]),
                params=GbdtParams.from_dict(d["params"]),
                base_scores=[float(v) for v in d["base_scores"]],
                ensembles=[[Tree.from_dict(t) for t in trees] for trees in d["trees"]],
                train_loss=[float(v) for v in d.get("train_loss", [])],
            )
        except KeyError as e:
            raise DataError(f"model document is missing {e.args[0]!r}") from None

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "GbdtModel":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except FileNotFoundError:
            raise DataError(f"no such model file: {path}") from None
        except json.JSONDecodeError as e:
            raise DataError(f"model file {path} is not valid JSON: {e}") from None
        return cls.from_dict(doc)


def _canonical_order(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    keys = (y,) + tuple(X[:, j] for j in range(X.shape[1] - 1, -1, -1))
    return np.lexsort(keys)


def fit_gbdt(
    X: np.ndarray,
    y: np.ndarray,
    params: GbdtParams | None = None,
    seed: int = 0,
    class_weighting: bool = False,
) -> GbdtModel:
    """Train a one-vs-rest boosted ensemble.

    ``class_weighting`` scales the gradients of each class inversely to its
    frequency, which trades overall accuracy toward the rare classes.
    """
    params = params or GbdtParams()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).reshape(-1)
    if X.ndim != 2:
        raise DataError(f"features must be a 2-d matrix, got shape {X.shape}")
    if X.shape[0] != y.shape[0]:
        raise DataError(f"{X.shape[0]} feature rows vs {y.shape[0]} labels")
    if X.shape[0] < 1:
        raise DataError("cannot train on an empty dataset")
    classes = sorted(int(c) for c in np.unique(y))
    if len(classes) < 2:
        raise DataError("training data holds a single class; nothing to separate")

    order = _canonical_order(X, y)
    Xs = X[order]
    ys = y[order]
    n = Xs.shape[0]

    thresholds: list[np.ndarray] = []
    Xb = np.empty(Xs.shape, dtype=np.int64)
    for j in range(Xs.shape[1]):
        uniq, inv = np.unique(Xs[:, j], return_inverse=True)
        mid = (uniq[:-1] + uniq[1:]) / 2.0
        # a midpoint of two adjacent floats may round up onto the right value;
        # nudge it down so "x <= t" keeps the two sides apart
        hi = mid >= uniq[1:]
        if np.any(hi):
            mid[hi] = np.nextafter(uniq[1:][hi], uniq[:-1][hi])
        thresholds.append(mid)
        Xb[:, j] = inv

    weights = np.ones(n)
    if class_weighting:
        counts = {c: int(np.sum(ys == c)) for c in classes}
        for c in classes:
            weights[ys == c] = n / (len(classes) * counts[c])

    targets = [(ys == c).astype(np.float64) for c in classes]
    base: list[float] = []
    margins = np.empty((n, len(classes)))
    for ci, y01 in enumerate(targets):
        p = float(np.clip(y01.mean(), 1e-6, 1 - 1e-6))
        base.append(float(np.log(p / (1 - p))))
        margins[:, ci] = base[ci]

    rng = np.random.default_rng(seed)
    m = max(1, int(round(params.subsample * n)))
    ensembles: list[list[Tree]] = [[] for _ in classes]
    losses: list[float] = []
    for _round in range(params.trees):
        for ci, y01 in enumerate(targets):
            p = 1.0 / (1.0 + np.exp(-np.clip(margins[:, ci], -500, 500)))
            g = (p - y01) * weights
            h = np.maximum(p * (1.0 - p), _EPS) * weights
            if params.subsample < 1.0:
                rows = np.sort(rng.permutation(n)[:m])
            else:
                rows = np.arange(n)
            tree = _grow_tree(Xb, thresholds, rows, g, h, y01, params)
            ensembles[ci].append(tree)
            margins[:, ci] += tree.predict(Xs)
        loss = 0.0
        for ci, y01 in enumerate(targets):
            f = margins[:, ci]
            loss += float(np.mean(np.logaddexp(0.0, f) - y01 * f))
        losses.append(loss)

    return GbdtModel(
        classes=classes,
        feature_width=X.shape[1],
        params=params,
        base_scores=base,
        ensembles=ensembles,
        train_loss=losses,
    )
