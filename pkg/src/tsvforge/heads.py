"""Regression heads: closed-form ridge with validation-selected alpha, and a
least-squares gradient-boosted tree corrector for residuals."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .checkpoint import load_tensors, save_tensors
from .errors import ConfigurationError, DataError, DimensionError, NumericError

ALPHA_GRID = (0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0, 1000.0)
STD_FLOOR = 1e-8


@dataclass
class RidgeHead:
    """Ridge regression on standardised features.

    ``W`` is [feat_dim + 1, out_dim] with the (unpenalised) bias in the last
    row; ``mean`` and ``scale`` are the training-set feature statistics.
    """

    W: np.ndarray
    alpha: float
    mean: np.ndarray
    scale: np.ndarray

    @property
    def coef(self) -> np.ndarray:
        """Coefficients mapped back to raw feature units."""
        return self.W[:-1] / self.scale[:, None]

    @property
    def intercept(self) -> np.ndarray:
        return self.W[-1] - self.mean @ self.coef

    def design(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.mean.size:
            raise DimensionError(f"expected [n, {self.mean.size}] features, got {X.shape}")
        Z = (X - self.mean) / self.scale
        return np.hstack([Z, np.ones((Z.shape[0], 1))])

    def predict(self, X) -> np.ndarray:
        return self.design(X) @ self.W

    def save(self, path, meta: dict | None = None):
        full = {"alpha": self.alpha}
        full.update(meta or {})
        return save_tensors(path, {"W": self.W, "mean": self.mean, "scale": self.scale}, full, kind="ridge_head")

    @classmethod
    def load(cls, path) -> "RidgeHead":
        tensors, meta, kind = load_tensors(path)
        if kind != "ridge_head":
            raise DataError(f"{path} holds a {kind!r} container, not a ridge head")
        return cls(tensors["W"], float(meta["alpha"]), tensors["mean"], tensors["scale"])


def _standardize(X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    scale = np.maximum(X.std(axis=0), STD_FLOOR)
    return (X - mean) / scale, mean, scale


class _Gram:
    """Cached normal-equation pieces for repeated solves over an alpha grid."""

    def __init__(self, X, Y):
        X = np.asarray(X, dtype=np.float64)
        Y = np.asarray(Y, dtype=np.float64)
        if Y.ndim == 1:
            Y = Y[:, None]
        if X.ndim != 2 or X.shape[0] != Y.shape[0]:
            raise DimensionError(f"X {X.shape} and Y {Y.shape} disagree on example count")
        if X.shape[0] < 1:
            raise DataError("ridge needs at least one example")
        Z, self.mean, self.scale = _standardize(X)
        self.A = np.hstack([Z, np.ones((Z.shape[0], 1))])
        self.G = self.A.T @ self.A
        self.rhs = self.A.T @ Y
        self.p = X.shape[1]

    def system(self, alpha: float) -> np.ndarray:
        M = self.G.copy()
        idx = np.arange(self.p)
        M[idx, idx] += alpha
        return M

    def solve(self, alpha: float) -> RidgeHead:
        if not alpha > 0:
            raise ConfigurationError(f"alpha must be > 0, got {alpha}")
        try:
            W = cho_solve(cho_factor(self.system(alpha), lower=False, check_finite=True), self.rhs)
        except LinAlgError as exc:
            raise NumericError(f"ridge system not positive definite at alpha={alpha}") from exc
        return RidgeHead(W, float(alpha), self.mean, self.scale)


def ridge_fit(X, Y, alpha: float) -> RidgeHead:
    """Closed-form multi-output ridge with intercept via Cholesky."""
    return _Gram(X, Y).solve(alpha)


def normal_equation_residual(head: RidgeHead, X, Y) -> float:
    """Relative residual ||(A'A + aI')W - A'Y|| / ||A'Y|| on the training data."""
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    A = head.design(X)
    M = A.T @ A
    idx = np.arange(A.shape[1] - 1)
    M[idx, idx] += head.alpha
    rhs = A.T @ Y
    return float(np.linalg.norm(M @ head.W - rhs) / max(np.linalg.norm(rhs), 1e-300))


def rmse_plus_mae(pred, truth) -> float:
    err = np.asarray(pred, dtype=np.float64) - np.asarray(truth, dtype=np.float64)
    if err.size == 0:
        raise DataError("cannot score empty predictions")
    return float(np.sqrt(np.mean(err * err)) + np.mean(np.abs(err)))


def alpha_search(X_train, Y_train, X_val, Y_val, grid=ALPHA_GRID) -> tuple[float, RidgeHead]:
    """Pick alpha minimising sqrt(MSE) + MAE on validation; ties go to the smaller alpha.

    The returned head is fit on the training rows only.
    """
    grid = sorted(float(a) for a in grid)
    if not grid:
        raise ConfigurationError("alpha grid is empty")
    gram = _Gram(X_train, Y_train)
    Y_val = np.asarray(Y_val, dtype=np.float64)
    if Y_val.ndim == 1:
        Y_val = Y_val[:, None]
    best = None
    for alpha in grid:
        head = gram.solve(alpha)
        score = rmse_plus_mae(head.predict(X_val), Y_val)
        if best is None or score < best[0]:
            best = (score, head)
    return best[1].alpha, best[1]


# ------------------------------------------------------------------ boosting

@dataclass
class RegressionTree:
    """Greedy least-squares CART; leaves hold mean residual vectors.

    Stored flat: internal node i splits on ``feature[i] <= threshold[i]``;
    ``left``/``right`` are child indices, -1 marking a leaf.
    """

    feature: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    value: list[np.ndarray] = field(default_factory=list)

    @property
    def n_leaves(self) -> int:
        return sum(1 for c in self.left if c < 0)

    def fit(self, X: np.ndarray, R: np.ndarray, max_depth: int, min_samples_leaf: int = 1) -> "RegressionTree":
        self._grow(X, R, np.arange(X.shape[0]), max_depth, min_samples_leaf)
        return self

    def _new(self, value) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        return len(self.value) - 1

    def _grow(self, X, R, rows, depth, min_leaf) -> int:
        node = self._new(R[rows].mean(axis=0))
        if depth <= 0 or rows.size < 2 * min_leaf:
            return node
        split = _best_split(X[rows], R[rows], min_leaf)
        if split is None:
            return node
        j, thr = split
        go_left = X[rows, j] <= thr
        self.feature[node], self.threshold[node] = j, thr
        self.left[node] = self._grow(X, R, rows[go_left], depth - 1, min_leaf)
        self.right[node] = self._grow(X, R, rows[~go_left], depth - 1, min_leaf)
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        out = np.empty((X.shape[0],) + np.shape(self.value[0]))
        stack = [(0, np.arange(X.shape[0]))]
        while stack:
            node, rows = stack.pop()
            if self.left[node] < 0:
                out[rows] = self.value[node]
                continue
            go_left = X[rows, self.feature[node]] <= self.threshold[node]
            stack.append((self.left[node], rows[go_left]))
            stack.append((self.right[node], rows[~go_left]))
        return out


def _best_split(X: np.ndarray, R: np.ndarray, min_leaf: int):
    """Exhaustive search for the split with the largest SSE reduction."""
    n = X.shape[0]
    R2 = R.reshape(n, -1)
    total = R2.sum(axis=0)
    parent = float(total @ total) / n
    best_gain, best = 1e-12 * max(parent, 1.0), None
    counts = np.arange(1, n)
    for j in range(X.shape[1]):
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        csum = np.cumsum(R2[order], axis=0)[:-1]
        left_sq = np.einsum("ij,ij->i", csum, csum) / counts
        right = total - csum
        right_sq = np.einsum("ij,ij->i", right, right) / (n - counts)
        gain = left_sq + right_sq - parent
        ok = (xs[:-1] < xs[1:]) & (counts >= min_leaf) & (n - counts >= min_leaf)
        if not ok.any():
            continue
        gain = np.where(ok, gain, -np.inf)
        i = int(np.argmax(gain))
        if gain[i] > best_gain:
            best_gain, best = gain[i], (j, 0.5 * (xs[i] + xs[i + 1]))
    return best


@dataclass
class BoostedResidualModel:
    """Linear base forecast plus shrinkage * sum of residual trees."""

    base: RidgeHead
    trees: list[RegressionTree]
    shrinkage: float
    offset: np.ndarray | float = 0.0

    def predict_residual(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        total = np.zeros((X.shape[0],) + self.base.W.shape[1:])
        for tree in self.trees:
            total += tree.predict(X).reshape(total.shape)
        return self.shrinkage * total + self.offset

    def predict(self, X) -> np.ndarray:
        return self.base.predict(X) + self.predict_residual(X)


def boosted_residual_fit(features, target, stage1: RidgeHead, n_trees: int = 100, depth: int = 3,
                         shrinkage: float = 0.1, min_samples_leaf: int = 1,
                         trace: list | None = None) -> BoostedResidualModel:
    """Gradient boosting on the residual ``target - stage1(features)``.

    ``target`` may be a vector or an [n, k] matrix (one tree then predicts
    all k outputs). A constant residual yields zero trees with the constant
    kept as ``offset``. When ``trace`` is a list the training MSE after each
    tree is appended to it.
    """
    X = np.asarray(features, dtype=np.float64)
    Y = np.asarray(target, dtype=np.float64)
    Y2 = Y[:, None] if Y.ndim == 1 else Y
    if n_trees < 0 or depth < 1 or not 0 < shrinkage <= 1:
        raise ConfigurationError("need n_trees >= 0, depth >= 1, 0 < shrinkage <= 1")
    residual = Y2 - stage1.predict(X)
    model = BoostedResidualModel(stage1, [], float(shrinkage))
    if np.ptp(residual, axis=0).max(initial=0.0) == 0.0:
        model.offset = residual[0].copy() if residual.size else 0.0
        return model
    fitted = np.zeros_like(residual)
    for _ in range(n_trees):
        tree = RegressionTree().fit(X, residual - fitted, depth, min_samples_leaf)
        if tree.n_leaves < 2:
            break
        model.trees.append(tree)
        fitted += shrinkage * tree.predict(X).reshape(fitted.shape)
        if trace is not None:
            trace.append(float(np.mean((residual - fitted) ** 2)))
    return model
