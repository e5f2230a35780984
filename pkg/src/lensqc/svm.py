"""RBF-kernel SVM trained from scratch with sequential minimal optimization.

The binary solver optimizes the soft-margin dual

    max  sum(a) - 1/2 sum_ij a_i a_j y_i y_j K(x_i, x_j)
    s.t. 0 <= a_i <= C_i,  sum(a_i y_i) = 0

by repeatedly updating the maximal-KKT-violating pair (the pair whose
optimality gap m - M is largest), with the standard analytic
two-variable solution and box clipping. Multi-class problems train one
binary machine per unordered class pair and predict by majority vote.

The kernel matrix is cached in full for up to ``FULL_CACHE_LIMIT``
samples; beyond that a least-recently-used row cache bounds memory.
"""

import json
import warnings
from collections import OrderedDict
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import (
    ClassTooSmallError,
    DimensionMismatchError,
    FeatureOrderError,
    ModelFormatError,
    SingleClassDataError,
)
from .features import FEATURE_NAMES, Standardizer

MODEL_FORMAT = "lensqc-model"
MODEL_VERSION = 1

DEFAULT_C_GRID = (0.1, 1.0, 10.0, 100.0)
DEFAULT_GAMMA_GRID = (0.001, 0.01, 0.1, 1.0)
DEFAULT_FOLDS = 5
DEFAULT_TOL = 1e-3
DEFAULT_MAX_ITER = 1_000_000
FULL_CACHE_LIMIT = 8000

_TAU = 1e-12


@dataclass(frozen=True)
class RbfParams:
    """Regularization strength C and kernel coefficient gamma."""

    c: float
    gamma: float

    def __post_init__(self):
        if self.c <= 0 or self.gamma <= 0:
            raise ValueError(f"C and gamma must be > 0, got C={self.c}, gamma={self.gamma}")


def rbf_kernel(x, y, gamma):
    """exp(-gamma * ||x - y||^2) for a single vector pair."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionMismatchError(f"vector shapes differ: {x.shape} vs {y.shape}")
    if gamma <= 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    d = x - y
    return float(np.exp(-gamma * np.dot(d, d)))


def rbf_kernel_matrix(X, Y, gamma):
    """Pairwise RBF kernel matrix between the rows of X and Y."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.shape[1] != Y.shape[1]:
        raise DimensionMismatchError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    sq_x = np.einsum("ij,ij->i", X, X)
    sq_y = np.einsum("ij,ij->i", Y, Y)
    d2 = sq_x[:, None] + sq_y[None, :] - 2.0 * X @ Y.T
    np.maximum(d2, 0.0, out=d2)
    return np.exp(-gamma * d2)


class _KernelCache:
    """Kernel rows for the SMO loop.

    Materializes the full n x n matrix when n <= full_limit, otherwise
    keeps an LRU dict of rows sized to the same memory budget.
    """

    def __init__(self, X, gamma, full_limit=FULL_CACHE_LIMIT):
        self.X = X
        self.gamma = gamma
        self.n = X.shape[0]
        self._sq = np.einsum("ij,ij->i", X, X)
        if self.n <= full_limit:
            self._full = rbf_kernel_matrix(X, X, gamma)
            np.fill_diagonal(self._full, 1.0)
            self._rows = None
        else:
            self._full = None
            self._rows = OrderedDict()
            self._max_rows = max(64, (full_limit * full_limit) // self.n)

    def row(self, i):
        if self._full is not None:
            return self._full[i]
        rows = self._rows
        if i in rows:
            rows.move_to_end(i)
            return rows[i]
        d2 = self._sq + self._sq[i] - 2.0 * (self.X @ self.X[i])
        np.maximum(d2, 0.0, out=d2)
        k = np.exp(-self.gamma * d2)
        k[i] = 1.0
        rows[i] = k
        if len(rows) > self._max_rows:
            rows.popitem(last=False)
        return k


def _smo(cache, y, c_vec, tol, max_iter):
    """Maximal-violating-pair SMO; returns (alpha, bias, n_iter, converged, objective)."""
    n = y.size
    alpha = np.zeros(n)
    grad = -np.ones(n)
    n_iter = 0
    converged = False

    while n_iter < max_iter:
        yg = -y * grad
        up = ((y > 0) & (alpha < c_vec)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < c_vec)) | ((y > 0) & (alpha > 0))
        if not up.any() or not low.any():
            converged = True
            break
        up_vals = np.where(up, yg, -np.inf)
        low_vals = np.where(low, yg, np.inf)
        i = int(np.argmax(up_vals))
        j = int(np.argmin(low_vals))
        if up_vals[i] - low_vals[j] <= tol:
            converged = True
            break

        ki = cache.row(i)
        kj = cache.row(j)
        eta = ki[i] + kj[j] - 2.0 * ki[j]
        if eta <= 0:
            eta = _TAU
        ci, cj = c_vec[i], c_vec[j]
        ai_old, aj_old = alpha[i], alpha[j]

        if y[i] != y[j]:
            delta = (-grad[i] - grad[j]) / eta
            diff = ai_old - aj_old
            ai = ai_old + delta
            aj = aj_old + delta
            if diff > 0:
                if aj < 0:
                    aj = 0.0
                    ai = diff
            else:
                if ai < 0:
                    ai = 0.0
                    aj = -diff
            if diff > ci - cj:
                if ai > ci:
                    ai = ci
                    aj = ci - diff
            else:
                if aj > cj:
                    aj = cj
                    ai = cj + diff
        else:
            delta = (grad[i] - grad[j]) / eta
            total = ai_old + aj_old
            ai = ai_old - delta
            aj = aj_old + delta
            if total > ci:
                if ai > ci:
                    ai = ci
                    aj = total - ci
            else:
                if aj < 0:
                    aj = 0.0
                    ai = total
            if total > cj:
                if aj > cj:
                    aj = cj
                    ai = total - cj
            else:
                if ai < 0:
                    ai = 0.0
                    aj = total
        alpha[i] = ai
        alpha[j] = aj
        di = (ai - ai_old) * y[i]
        dj = (aj - aj_old) * y[j]
        grad += y * (di * ki + dj * kj)
        n_iter += 1

    yg = -y * grad
    free = (alpha > 0) & (alpha < c_vec)
    if free.any():
        bias = float(yg[free].mean())
    else:
        up = ((y > 0) & (alpha < c_vec)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < c_vec)) | ((y > 0) & (alpha > 0))
        hi = yg[up].max() if up.any() else 0.0
        lo = yg[low].min() if low.any() else 0.0
        bias = float((hi + lo) / 2.0)

    objective = float(0.5 * (alpha.sum() - alpha @ grad))
    return alpha, bias, n_iter, converged, objective


@dataclass
class BinarySvm:
    """One trained soft-margin machine in standardized feature space."""

    support_vectors: np.ndarray
    dual_coef: np.ndarray  # alpha_i * y_i per support vector
    bias: float
    params: RbfParams
    converged: bool = True
    n_iter: int = 0
    objective: float = 0.0
    sv_index: np.ndarray = field(default=None, repr=False)  # into the training set
    sv_alpha: np.ndarray = field(default=None, repr=False)

    @property
    def n_features(self):
        return self.support_vectors.shape[1]

    def decision_values(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise DimensionMismatchError(
                f"expected {self.n_features} features, got {X.shape[1]}"
            )
        K = rbf_kernel_matrix(X, self.support_vectors, self.params.gamma)
        return K @ self.dual_coef + self.bias


def train_binary(X, y, params, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER,
                 class_weight=False):
    """Train one binary machine on labels in {-1, +1}.

    With ``class_weight`` the box constraint of each sample is scaled by
    n / (2 * n_class), balancing the two classes. Hitting the iteration
    cap does not raise; the best iterate is returned with
    ``converged=False`` and a warning.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DimensionMismatchError(f"X {X.shape} does not match y {y.shape}")
    if not ((y == 1.0) | (y == -1.0)).all():
        raise ValueError("labels must be +1 or -1")
    if (y == 1.0).all() or (y == -1.0).all():
        raise SingleClassDataError("both classes must be present")
    if tol <= 0:
        raise ValueError(f"tol must be > 0, got {tol}")

    n = y.size
    c_vec = np.full(n, params.c)
    if class_weight:
        n_pos = int((y == 1.0).sum())
        n_neg = n - n_pos
        c_vec[y == 1.0] *= n / (2.0 * n_pos)
        c_vec[y == -1.0] *= n / (2.0 * n_neg)

    cache = _KernelCache(X, params.gamma)
    alpha, bias, n_iter, converged, objective = _smo(cache, y, c_vec, tol, max_iter)
    if not converged:
        warnings.warn(
            f"SMO hit the iteration cap ({max_iter}) before reaching tol={tol}",
            RuntimeWarning,
        )

    sv = alpha > 0.0
    return BinarySvm(
        support_vectors=X[sv].copy(),
        dual_coef=(alpha * y)[sv],
        bias=bias,
        params=params,
        converged=converged,
        n_iter=n_iter,
        objective=objective,
        sv_index=np.flatnonzero(sv),
        sv_alpha=alpha[sv],
    )


def predict_binary(machine, x):
    """Predict a single vector; ties (decision 0) go to the positive class."""
    d = float(machine.decision_values(x)[0])
    return (1 if d >= 0.0 else -1), d


@dataclass
class PairMachine:
    label_pos: str
    label_neg: str
    svm: BinarySvm


@dataclass
class SvmModel:
    """One-vs-one multi-class model with its standardizer and feature order."""

    labels: list
    machines: list
    standardizer: Standardizer
    feature_names: tuple = FEATURE_NAMES
    meta: dict = field(default_factory=dict)

    def predict(self, features):
        """Predict labels for a batch of raw (unstandardized) feature vectors."""
        X = np.atleast_2d(np.asarray(features, dtype=np.float64))
        Xs = self.standardizer.transform(X)
        n = Xs.shape[0]
        order = {lab: k for k, lab in enumerate(self.labels)}
        votes = np.zeros((n, len(self.labels)), dtype=np.int64)
        won_mag = np.zeros((n, len(self.labels)))
        for pm in self.machines:
            d = pm.svm.decision_values(Xs)
            pos = d >= 0.0
            ip, ineg = order[pm.label_pos], order[pm.label_neg]
            votes[pos, ip] += 1
            votes[~pos, ineg] += 1
            won_mag[pos, ip] += np.abs(d[pos])
            won_mag[~pos, ineg] += np.abs(d[~pos])
        out = []
        for r in range(n):
            best = np.flatnonzero(votes[r] == votes[r].max())
            if best.size > 1:
                mags = won_mag[r, best]
                best = best[mags == mags.max()]
            out.append(self.labels[int(best[0])])
        return out

    def predict_one(self, feature_vec):
        """Predict a single vector; also returns vote counts and pair decisions."""
        x = np.asarray(feature_vec, dtype=np.float64).reshape(1, -1)
        xs = self.standardizer.transform(x)
        votes = {lab: 0 for lab in self.labels}
        pair_decisions = []
        for pm in self.machines:
            d = float(pm.svm.decision_values(xs)[0])
            winner = pm.label_pos if d >= 0.0 else pm.label_neg
            votes[winner] += 1
            pair_decisions.append((pm.label_pos, pm.label_neg, d))
        label = self.predict(x)[0]
        return label, votes, pair_decisions

    @property
    def converged(self):
        return all(pm.svm.converged for pm in self.machines)


def train_multiclass(features, labels, params, label_order=None,
                     tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER,
                     class_weight=False, meta=None):
    """Train a one-vs-one model; fits the standardizer on these features.

    Each pair machine sees only its two classes' samples. The first label
    of a pair (in label order) is the machine's positive class.
    """
    X = np.asarray(features, dtype=np.float64)
    labels = list(labels)
    if X.ndim != 2 or X.shape[0] != len(labels):
        raise DimensionMismatchError(f"features {X.shape} do not match {len(labels)} labels")

    if label_order is None:
        label_order = list(dict.fromkeys(labels))
    else:
        label_order = list(label_order)
        extra = set(labels) - set(label_order)
        if extra:
            raise ValueError(f"labels not in label_order: {sorted(extra)}")
    if len(label_order) < 2:
        raise SingleClassDataError(f"need >= 2 classes, got {label_order}")

    lab_arr = np.asarray(labels, dtype=object)
    counts = {lab: int((lab_arr == lab).sum()) for lab in label_order}
    small = [lab for lab, cnt in counts.items() if cnt < 2]
    if small:
        raise ClassTooSmallError(f"classes with fewer than 2 samples: {small}")

    standardizer = Standardizer().fit(X)
    Xs = standardizer.transform(X)

    machines = []
    for a, b in combinations(label_order, 2):
        mask = (lab_arr == a) | (lab_arr == b)
        y = np.where(lab_arr[mask] == a, 1.0, -1.0)
        svm = train_binary(Xs[mask], y, params, tol=tol, max_iter=max_iter,
                           class_weight=class_weight)
        machines.append(PairMachine(label_pos=a, label_neg=b, svm=svm))

    return SvmModel(
        labels=label_order,
        machines=machines,
        standardizer=standardizer,
        feature_names=FEATURE_NAMES,
        meta=dict(meta or {}),
    )


def stratified_folds(labels, folds, seed):
    """Deterministic stratified fold assignment (round-robin after a seeded shuffle)."""
    labels = np.asarray(labels, dtype=object)
    if folds < 2:
        raise ValueError(f"folds must be >= 2, got {folds}")
    assignment = np.empty(labels.size, dtype=np.int64)
    rng = np.random.default_rng(seed)
    for lab in sorted(set(labels.tolist())):
        idx = np.flatnonzero(labels == lab)
        if idx.size < folds:
            raise ClassTooSmallError(
                f"class {lab!r} has {idx.size} samples, fewer than {folds} folds"
            )
        rng.shuffle(idx)
        assignment[idx] = np.arange(idx.size) % folds
    return assignment


def grid_search(features, labels, c_grid=DEFAULT_C_GRID, gamma_grid=DEFAULT_GAMMA_GRID,
                folds=DEFAULT_FOLDS, seed=0, tol=DEFAULT_TOL,
                max_iter=DEFAULT_MAX_ITER, class_weight=False):
    """Stratified k-fold CV over the (C, gamma) grid.

    Returns (best RbfParams, table) where the table holds one
    {"c", "gamma", "accuracy"} row per cell. Ties go to the smaller C,
    then the smaller gamma; duplicate grid values are collapsed.
    """
    X = np.asarray(features, dtype=np.float64)
    labels = list(labels)
    c_values = sorted(set(float(c) for c in c_grid))
    gamma_values = sorted(set(float(g) for g in gamma_grid))
    if not c_values or not gamma_values:
        raise ValueError("parameter grids must be non-empty")

    assignment = stratified_folds(labels, folds, seed)
    lab_arr = np.asarray(labels, dtype=object)
    label_order = list(dict.fromkeys(labels))

    table = []
    best = None
    best_acc = -1.0
    for c in c_values:
        for gamma in gamma_values:
            params = RbfParams(c=c, gamma=gamma)
            correct = 0
            for f in range(folds):
                test_mask = assignment == f
                model = train_multiclass(
                    X[~test_mask], lab_arr[~test_mask].tolist(), params,
                    label_order=label_order, tol=tol, max_iter=max_iter,
                    class_weight=class_weight,
                )
                pred = model.predict(X[test_mask])
                correct += sum(p == t for p, t in zip(pred, lab_arr[test_mask]))
            acc = correct / len(labels)
            table.append({"c": c, "gamma": gamma, "accuracy": acc})
            if acc > best_acc:
                best_acc = acc
                best = params
    return best, table


# --- model file I/O ---

def save_model(model, path):
    """Write the model as versioned JSON (floats keep full precision via repr)."""
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "feature_names": list(model.feature_names),
        "labels": list(model.labels),
        "standardizer": {
            "mean": model.standardizer.mean.tolist(),
            "scale": model.standardizer.scale.tolist(),
        },
        "machines": [
            {
                "label_pos": pm.label_pos,
                "label_neg": pm.label_neg,
                "c": pm.svm.params.c,
                "gamma": pm.svm.params.gamma,
                "bias": pm.svm.bias,
                "converged": pm.svm.converged,
                "n_iter": pm.svm.n_iter,
                "objective": pm.svm.objective,
                "dual_coef": pm.svm.dual_coef.tolist(),
                "support_vectors": [sv.tolist() for sv in pm.svm.support_vectors],
            }
            for pm in model.machines
        ],
        "meta": model.meta,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_model(path):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"{path}: not valid JSON: {exc}") from exc
    if doc.get("format") != MODEL_FORMAT:
        raise ModelFormatError(f"{path}: not a {MODEL_FORMAT} file")
    if doc.get("version") != MODEL_VERSION:
        raise ModelFormatError(f"{path}: unsupported version {doc.get('version')!r}")
    names = tuple(doc.get("feature_names", ()))
    if names != FEATURE_NAMES:
        raise FeatureOrderError(
            f"{path}: feature order does not match this build"
        )
    standardizer = Standardizer(
        mean=doc["standardizer"]["mean"], scale=doc["standardizer"]["scale"]
    )
    machines = []
    for m in doc["machines"]:
        svm = BinarySvm(
            support_vectors=np.asarray(m["support_vectors"], dtype=np.float64),
            dual_coef=np.asarray(m["dual_coef"], dtype=np.float64),
            bias=float(m["bias"]),
            params=RbfParams(c=float(m["c"]), gamma=float(m["gamma"])),
            converged=bool(m["converged"]),
            n_iter=int(m["n_iter"]),
            objective=float(m["objective"]),
        )
        machines.append(PairMachine(m["label_pos"], m["label_neg"], svm))
    return SvmModel(
        labels=list(doc["labels"]),
        machines=machines,
        standardizer=standardizer,
        feature_names=names,
        meta=doc.get("meta", {}),
    )
