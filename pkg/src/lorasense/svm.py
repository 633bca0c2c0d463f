"""Soft-margin kernel SVM trained with simplified SMO, one-vs-one
multiclass voting, and stratified k-fold cross-validation."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .dataset import Dataset, stratified_folds
from .errors import DegenerateTrainingError, DomainError, FormatError
from .metrics import evaluate, mean_reports

FORMAT_VERSION = 1


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "rbf"
    gamma: Optional[float] = None  # None: resolved from the training data

    def __post_init__(self):
        if self.kind not in ("linear", "rbf"):
            raise DomainError(f"unknown kernel {self.kind!r}")
        if self.kind == "rbf" and self.gamma is not None and not self.gamma > 0:
            raise DomainError("rbf kernel needs gamma > 0")


def gram(kernel: KernelSpec, A, B) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    G = A @ B.T
    if kernel.kind == "linear":
        return G
    if kernel.gamma is None:
        raise DomainError("rbf kernel gamma is unresolved")
    sq = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * G
    return np.exp(-kernel.gamma * np.maximum(sq, 0.0))


@dataclass
class BinarySvm:
    support_vectors: np.ndarray
    dual_coefs: np.ndarray  # alpha_i * y_i
    bias: float
    kernel: KernelSpec
    class_pair: tuple  # (positive class, negative class)
    support_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    converged: bool = True

    def decision_function(self, Z) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
        if len(self.dual_coefs) == 0:
            return np.full(Z.shape[0], self.bias)
        return gram(self.kernel, Z, self.support_vectors) @ self.dual_coefs + self.bias

    def vote(self, Z) -> np.ndarray:
        pos, neg = self.class_pair
        return np.where(self.decision_function(Z) >= 0.0, pos, neg)


def dual_objective(alpha, y, K) -> float:
    """``sum(alpha) - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij``."""
    ay = alpha * y
    return float(alpha.sum() - 0.5 * ay @ K @ ay)


def train_binary(X, y, kernel: KernelSpec, C: float = 1.0, tol: float = 1e-3,
                 max_passes: int = 50, seed: int = 42, class_pair=(1, -1),
                 max_iter: int = 100_000, return_alpha: bool = False):
    """Train one binary SVM on labels in {+1, -1}.

    The second multiplier of every SMO step is drawn from a seeded
    generator; if that choice makes no progress the remaining indices are
    swept from the drawn position onward.  Training stops once a full pass
    over freshly computed errors finds no point violating KKT by more than
    ``tol``, or after ``max_passes`` consecutive passes without progress.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    if X.shape[0] != y.shape[0]:
        raise DomainError("X and y differ in length")
    if not np.all(np.isfinite(X)):
        raise DomainError("features must be finite")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise DomainError("labels must be +1 or -1")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise DegenerateTrainingError("binary training needs both classes")
    if not C > 0:
        raise DomainError("C must be > 0")
    K = gram(kernel, X, X)
    alpha, b, _, converged = kernels.smo_solve(K, y, C, tol, max_passes, seed, max_iter)
    sv = np.flatnonzero(alpha > 0.0)
    model = BinarySvm(X[sv].copy(), alpha[sv] * y[sv], b, kernel, tuple(class_pair),
                      sv.astype(np.int64), converged)
    if return_alpha:
        return model, alpha
    return model


@dataclass
class SvmModel:
    binaries: list
    classes: tuple
    scaler_mean: np.ndarray
    scaler_std: np.ndarray
    kernel: KernelSpec
    C: float = 1.0
    gateway_order: tuple = ()

    @property
    def n_features(self) -> int:
        return len(self.scaler_mean)

    def standardize(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise DomainError(f"expected {self.n_features} features, got {X.shape[1]}")
        return (X - self.scaler_mean) / self.scaler_std

    def votes(self, X) -> np.ndarray:
        Z = self.standardize(X)
        pos = {c: i for i, c in enumerate(self.classes)}
        tally = np.zeros((Z.shape[0], len(self.classes)), dtype=np.int64)
        rows = np.arange(Z.shape[0])
        for b in self.binaries:
            winners = b.vote(Z)
            tally[rows, [pos[int(w)] for w in winners]] += 1
        return tally

    def predict_many(self, X) -> np.ndarray:
        # argmax returns the first maximum, i.e. the lowest class id
        return np.asarray(self.classes)[np.argmax(self.votes(X), axis=1)]


def predict(model: SvmModel, x) -> tuple[int, dict]:
    """Class of one feature vector plus the per-class vote counts."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DomainError("predict takes a single vector; use predict_many")
    tally = model.votes(x[None, :])[0]
    votes = {c: int(v) for c, v in zip(model.classes, tally)}
    return int(model.classes[int(np.argmax(tally))]), votes


def fit_scaler(X):
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[std == 0] = 1.0
    return mean, std


def default_gamma(Z) -> float:
    var = float(Z.var(axis=0).mean())
    d = Z.shape[1]
    return 1.0 / (d * var) if var > 0 else 1.0 / d


def _pair_seed(seed, a, b) -> int:
    return int(np.random.SeedSequence([int(seed), int(a), int(b)]).generate_state(1, np.uint64)[0])


def fit_svm(X, labels, kernel: Optional[KernelSpec] = None, C: float = 1.0,
            tol: float = 1e-3, max_passes: int = 50, seed: int = 42) -> SvmModel:
    """One-vs-one SVM over every class pair present in ``labels``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64)
    classes = tuple(int(c) for c in np.unique(labels))
    if len(classes) < 2:
        raise DegenerateTrainingError("need at least two classes")
    mean, std = fit_scaler(X)
    Z = (X - mean) / std
    kernel = kernel or KernelSpec()
    if kernel.kind == "rbf" and kernel.gamma is None:
        kernel = KernelSpec("rbf", default_gamma(Z))
    binaries = []
    for a, b in itertools.combinations(classes, 2):
        idx = np.flatnonzero((labels == a) | (labels == b))
        y = np.where(labels[idx] == a, 1.0, -1.0)
        m = train_binary(Z[idx], y, kernel, C, tol, max_passes, _pair_seed(seed, a, b), (a, b))
        m.support_indices = idx[m.support_indices]
        binaries.append(m)
    return SvmModel(binaries, classes, mean, std, kernel, float(C))


def fit_dataset(ds: Dataset, **kw) -> SvmModel:
    if not ds.is_labeled:
        raise DomainError("training data must be fully labeled")
    model = fit_svm(ds.X, ds.labels, **kw)
    model.gateway_order = tuple(ds.gateway_order)
    return model


@dataclass
class CrossValidation:
    folds: list  # EvalReport per fold
    mean: dict
    fold_of: np.ndarray


def cross_validate(ds: Dataset, k: int = 5, kernel: Optional[KernelSpec] = None,
                   C: float = 1.0, tol: float = 1e-3, seed: int = 42,
                   max_passes: int = 50) -> CrossValidation:
    fold_of = stratified_folds(ds, k, seed)
    classes = sorted(ds.class_counts)
    reports = []
    for f in range(k):
        train = ds.subset(np.flatnonzero(fold_of != f))
        test = ds.subset(np.flatnonzero(fold_of == f))
        model = fit_svm(train.X, train.labels, kernel, C, tol, max_passes, seed)
        reports.append(evaluate(test.labels, model.predict_many(test.X), classes))
    return CrossValidation(reports, mean_reports(reports), fold_of)


# -- serialization --------------------------------------------------------------

def _kernel_dict(k: KernelSpec):
    return {"kind": k.kind, "gamma": k.gamma}


def model_to_dict(model: SvmModel) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "model": "svm-ovo",
        "kernel": _kernel_dict(model.kernel),
        "C": model.C,
        "gateway_order": list(model.gateway_order),
        "classes": list(model.classes),
        "scaler": {"mean": model.scaler_mean.tolist(), "std": model.scaler_std.tolist()},
        "binaries": [
            {
                "class_pair": list(b.class_pair),
                "bias": b.bias,
                "converged": b.converged,
                "support_indices": b.support_indices.tolist(),
                "dual_coefs": b.dual_coefs.tolist(),
                "support_vectors": b.support_vectors.tolist(),
            }
            for b in model.binaries
        ],
    }


def model_to_json(model: SvmModel) -> str:
    return json.dumps(model_to_dict(model), indent=1, sort_keys=True) + "\n"


def model_from_json(text: str) -> SvmModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"model file is not valid JSON: {exc}") from None
    if doc.get("format_version") != FORMAT_VERSION or doc.get("model") != "svm-ovo":
        raise FormatError("not an svm-ovo model with format_version 1")
    kernel = KernelSpec(**doc["kernel"])
    d = len(doc["scaler"]["mean"])
    binaries = [
        BinarySvm(
            np.array(b["support_vectors"], dtype=np.float64).reshape(-1, d),
            np.array(b["dual_coefs"], dtype=np.float64),
            float(b["bias"]), kernel, tuple(b["class_pair"]),
            np.array(b["support_indices"], dtype=np.int64), bool(b["converged"]),
        )
        for b in doc["binaries"]
    ]
    return SvmModel(binaries, tuple(doc["classes"]), np.array(doc["scaler"]["mean"]),
                    np.array(doc["scaler"]["std"]), kernel, float(doc["C"]),
                    tuple(doc.get("gateway_order", ())))
