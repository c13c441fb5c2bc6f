"""scikit-learn style wrappers: decoders as classifiers over detector bit vectors."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .code_model import build_layout, build_memory_circuit
from .dataset import window_tensors
from .dem import build_z_graph, extract_dem
from .frame_sim import detector_grids
from .matching import PathTables, decode_batch
from .windowing import SlidingWindowPipeline


class _CircuitMixin:
    def _build(self, X):
        X = check_array(X, dtype=np.uint8)
        circuit = build_memory_circuit(build_layout(self.d), self.rounds, self.p)
        self.dem_ = extract_dem(circuit)
        self.graph_ = build_z_graph(self.dem_)
        self._check_width(X)
        self.n_features_in_ = X.shape[1]
        return X

    def _check_width(self, X):
        nd = self.dem_.indexing.num_detectors
        if X.shape[1] not in (nd, self.graph_.num_nodes):
            raise ValueError(f"expected {nd} (all) or {self.graph_.num_nodes} (Z only) detector columns, got {X.shape[1]}")

    def _zdet(self, X):
        check_is_fitted(self, "graph_")
        X = check_array(X, dtype=np.uint8)
        self._check_width(X)
        return np.ascontiguousarray(X[:, : self.graph_.num_nodes])


class MWPMDecoder(_CircuitMixin, ClassifierMixin, BaseEstimator):
    """Global minimum-weight perfect matching decoder; ``fit`` only builds the graph."""

    def __init__(self, d=3, p=0.001, rounds=3):
        self.d = d
        self.p = p
        self.rounds = rounds

    def fit(self, X, y=None):
        self._build(X)
        self.tables_ = PathTables.for_graph(self.graph_)
        self.classes_ = np.array([0, 1])
        return self

    def predict(self, X):
        z = self._zdet(X)
        return (decode_batch(self.tables_, z).bits & 1).astype(np.uint8)


class SlidingWindowDecoder(_CircuitMixin, ClassifierMixin, BaseEstimator):
    def __init__(self, d=3, p=0.001, rounds=3, buffer=3, core=3, merge=False):
        self.d = d
        self.p = p
        self.rounds = rounds
        self.buffer = buffer
        self.core = core
        self.merge = merge

    def fit(self, X, y=None):
        self._build(X)
        self.pipeline_ = SlidingWindowPipeline(self.graph_, self.buffer, self.core)
        self.classes_ = np.array([0, 1])
        return self

    def decode(self, X):
        return self.pipeline_.decode(self._zdet(X), residual=self.merge, merge=self.merge)

    def predict(self, X):
        out = self.decode(X)
        return out.merged if self.merge else out.combined

    def predict_windows(self, X):
        """Per-window core parities, shape ``(shots, m)``."""
        return self.decode(X).y_hat


class WindowTensorTransformer(_CircuitMixin, TransformerMixin, BaseEstimator):
    """Full detector vectors -> stacked window tensors ``(shots * m, 2b+c, d+1, d+1)``."""

    def __init__(self, d=3, p=0.001, rounds=3, buffer=3, core=3):
        self.d = d
        self.p = p
        self.rounds = rounds
        self.buffer = buffer
        self.core = core

    def fit(self, X, y=None):
        X = self._build(X)
        if X.shape[1] != self.dem_.indexing.num_detectors:
            raise ValueError("window tensors need every detector column")
        self.specs_ = SlidingWindowPipeline(self.graph_, self.buffer, self.core).specs
        return self

    def transform(self, X):
        check_is_fitted(self, "specs_")
        X = check_array(X, dtype=np.uint8)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} columns, got {X.shape[1]}")
        grids = detector_grids(X, self.dem_.indexing)
        t = np.stack([window_tensors(grids, s) for s in self.specs_], axis=1)
        return t.reshape(-1, *t.shape[2:])
