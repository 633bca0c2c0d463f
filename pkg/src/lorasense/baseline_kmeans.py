"""K-means clustering baseline with majority-vote cluster-to-class mapping."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import kernels
from .dataset import Dataset
from .errors import DomainError, FormatError, LabelError

FORMAT_VERSION = 1


@dataclass
class KMeansModel:
    centroids: np.ndarray
    inertia: float
    cluster_to_class: Optional[dict] = None
    n_iter: int = 0
    restart: int = 0
    history: list = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    def nearest(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.centroids.shape[1]:
            raise DomainError(f"expected {self.centroids.shape[1]} features, got {X.shape[1]}")
        diff = X[:, None, :] - self.centroids[None, :, :]
        return np.argmin((diff * diff).sum(axis=2), axis=1)

    def predict_many(self, X) -> np.ndarray:
        if self.cluster_to_class is None:
            raise LabelError("model has no cluster-to-class mapping; call assign_classes")
        lut = np.array([self.cluster_to_class[c] for c in range(self.k)])
        return lut[self.nearest(X)]


def _as_matrix(data) -> np.ndarray:
    X = data.X if isinstance(data, Dataset) else data
    return np.atleast_2d(np.asarray(X, dtype=np.float64))


def init_centroids(X, k, rng: np.random.Generator) -> np.ndarray:
    """Distance-weighted seeding: each new centre is drawn with probability
    proportional to its squared distance from the nearest chosen centre."""
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = ((X - X[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            raise DomainError("fewer distinct vectors than clusters")
        p = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
        p = min(p, n - 1)
        while d2[p] <= 0:  # guard against landing on a zero-weight point
            p = (p + 1) % n
        chosen.append(p)
        d2 = np.minimum(d2, ((X - X[p]) ** 2).sum(axis=1))
    return X[chosen].copy()


def fit(data, k: int = 5, seed: int = 42, max_iter: int = 300, n_restarts: int = 10) -> KMeansModel:
    """Best-of-``n_restarts`` Lloyd clustering, ties broken by restart index."""
    X = _as_matrix(data)
    if max_iter < 1 or n_restarts < 1:
        raise DomainError("max_iter and n_restarts must be >= 1")
    if k < 1:
        raise DomainError("k must be >= 1")
    if k > len(np.unique(X, axis=0)):
        raise DomainError(f"k={k} exceeds the number of distinct vectors")
    best = None
    for r, ss in enumerate(np.random.SeedSequence(seed).spawn(n_restarts)):
        C0 = init_centroids(X, k, np.random.default_rng(ss))
        C, _, inertia, n_iter, hist = kernels.lloyd(X, C0, max_iter)
        if best is None or inertia < best.inertia:
            best = KMeansModel(C, inertia, None, n_iter, r, list(hist))
    return best


def assign_classes(model: KMeansModel, ds: Dataset) -> KMeansModel:
    """Map each cluster to the majority class of its members (lowest class
    id on ties, class 1 for an empty cluster)."""
    if not ds.is_labeled:
        raise LabelError("assign_classes needs a fully labeled dataset")
    members = model.nearest(ds.X)
    mapping = {}
    for c in range(model.k):
        labs = ds.labels[members == c]
        if len(labs) == 0:
            mapping[c] = 1
            continue
        vals, counts = np.unique(labs, return_counts=True)
        mapping[c] = int(vals[np.argmax(counts)])
    return replace(model, cluster_to_class=mapping)


def predict(model: KMeansModel, x) -> int:
    x = np.asarray(x, dtype=np.float64)
    return int(model.predict_many(x[None, :])[0])


def to_json(model: KMeansModel) -> str:
    doc = {
        "format_version": FORMAT_VERSION,
        "model": "kmeans",
        "k": model.k,
        "centroids": model.centroids.tolist(),
        "inertia": model.inertia,
        "n_iter": model.n_iter,
        "restart": model.restart,
        "cluster_to_class": None if model.cluster_to_class is None
        else {str(c): v for c, v in sorted(model.cluster_to_class.items())},
    }
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def from_json(text: str) -> KMeansModel:
    doc = json.loads(text)
    if doc.get("format_version") != FORMAT_VERSION or doc.get("model") != "kmeans":
        raise FormatError("not a kmeans model with format_version 1")
    mapping = doc["cluster_to_class"]
    return KMeansModel(np.array(doc["centroids"], dtype=np.float64), float(doc["inertia"]),
                       None if mapping is None else {int(c): int(v) for c, v in mapping.items()},
                       int(doc["n_iter"]), int(doc["restart"]))
