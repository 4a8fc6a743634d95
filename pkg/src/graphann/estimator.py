"""scikit-learn style wrapper around build_index / query."""

from __future__ import annotations

import numpy as np
from scipy.sparse import csr_matrix
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._kernels import l2_to_rows
from .core import VectorSet
from .pipelines import PipelineConfig, build_index, preset, query
from .validation import check_vectors


class GraphANN(BaseEstimator, TransformerMixin):
    """Approximate k-nearest-neighbor search over a proximity graph.

    Parameters
    ----------
    preset : str, default="oa"
        Named pipeline to build; ignored when ``config`` is given.
    config : PipelineConfig or None
        Explicit pipeline configuration.
    n_neighbors : int, default=10
        Neighbors returned by ``kneighbors`` and used by ``transform``.
    search_c : int, default=100
        Candidate pool capacity at query time; raised to ``n_neighbors`` if smaller.
    random_state : int, default=0
        Overrides the pipeline's ``rng_seed``.

    Attributes
    ----------
    index_ : Index
        The built graph index.
    n_features_in_ : int
    """

    def __init__(self, preset="oa", config=None, n_neighbors=10, search_c=100, random_state=0):
        self.preset = preset
        self.config = config
        self.n_neighbors = n_neighbors
        self.search_c = search_c
        self.random_state = random_state

    def _config(self) -> PipelineConfig:
        cfg = self.config if self.config is not None else preset(self.preset)
        return cfg.with_params(rng_seed=int(self.random_state))

    def fit(self, X, y=None):
        base = VectorSet(check_vectors(X), "base")
        self.index_ = build_index(base, self._config())
        self.n_features_in_ = base.dim
        return self

    def kneighbors(self, X=None, n_neighbors=None, return_distance=True):
        """Approximate neighbors of each row of ``X`` (the training set if None)."""
        check_is_fitted(self, "index_")
        k = int(n_neighbors or self.n_neighbors)
        data = self.index_.base.data if X is None else check_vectors(X)
        c = max(int(self.search_c), k)
        ids = np.full((data.shape[0], k), -1, dtype=np.int64)
        dist = np.full((data.shape[0], k), np.inf, dtype=np.float32)
        for r, q in enumerate(data):
            found, _ = query(self.index_, q, k, c)
            ids[r, : found.size] = found
            dist[r, : found.size] = l2_to_rows(self.index_.base.data, found, q)
        return (dist, ids) if return_distance else ids

    def transform(self, X):
        """Sparse ``(n_queries, n_base)`` matrix of neighbor distances."""
        dist, ids = self.kneighbors(X)
        n = self.index_.base.count
        ok = ids >= 0
        rows = np.repeat(np.arange(ids.shape[0]), ok.sum(axis=1))
        return csr_matrix((dist[ok], (rows, ids[ok])), shape=(ids.shape[0], n))
