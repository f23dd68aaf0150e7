"""Scikit-learn style estimator facade over the training pipeline.

``X`` is an integer array of shape (n_samples, L) holding left-padded item
histories (0 = padding) and ``y`` the next-item ids.  Rows are assumed to
be in chronological order; the trailing ``validation_fraction`` of the
training rows is held out for model selection.
"""

from __future__ import annotations

import numpy as np
import torch
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .data import DatasetSplits, Sample
from .evaluate import evaluate, rank_targets, recommend
from .trainer import TrainConfig, train

__all__ = ["BBDRecommender"]


class BBDRecommender(BaseEstimator):
    """Brownian-bridge diffusion next-item recommender.

    Parameters mirror the training configuration; see ``TrainConfig``.
    """

    def __init__(self, T=20, m=1e-2, d=64, L=10, lambda1=1.0, lambda2=1.0,
                 lr=1e-3, weight_decay=0.0, batch_size=1024, max_epochs=200,
                 patience=20, seed=0, dropout=0.1, encoder_mode="transformer",
                 conditional_denoiser=False, stop_grad_target=False,
                 retrieval="diffusion", selection_metric="ndcg@20",
                 validation_fraction=0.1):
        self.T = T
        self.m = m
        self.d = d
        self.L = L
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.lr = lr
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.seed = seed
        self.dropout = dropout
        self.encoder_mode = encoder_mode
        self.conditional_denoiser = conditional_denoiser
        self.stop_grad_target = stop_grad_target
        self.retrieval = retrieval
        self.selection_metric = selection_metric
        self.validation_fraction = validation_fraction

    def _config(self) -> TrainConfig:
        params = {k: v for k, v in self.get_params().items()
                  if k != "validation_fraction"}
        return TrainConfig(**params)

    @staticmethod
    def _check_Xy(X, y=None, L=None):
        X = np.asarray(X)
        if X.ndim != 2:
            raise ValueError(f"X must be 2-D (n_samples, L), got shape {X.shape}")
        if L is not None and X.shape[1] != L:
            raise ValueError(f"X has history length {X.shape[1]}, expected {L}")
        if not np.issubdtype(X.dtype, np.integer):
            raise ValueError("X must hold integer item ids")
        if (X < 0).any():
            raise ValueError("item ids must be nonnegative")
        if y is not None:
            y = np.asarray(y)
            if y.shape != (X.shape[0],):
                raise ValueError("y must be 1-D with one target per row of X")
            if (y < 1).any():
                raise ValueError("targets must be valid item ids (>= 1)")
        return X, y

    def _samples(self, X, y=None):
        targets = y if y is not None else np.ones(len(X), dtype=np.int64)
        return [Sample(tuple(int(i) for i in row), int(t), 0, idx)
                for idx, (row, t) in enumerate(zip(X, targets))]

    def fit(self, X, y):
        X, y = self._check_Xy(X, y, self.L)
        if len(X) < 2:
            raise ValueError("need at least 2 samples to fit")
        samples = self._samples(X, y)
        n_val = max(1, int(round(self.validation_fraction * len(samples))))
        n_items = int(max(X.max(), y.max()))
        popularity = np.bincount(
            np.concatenate([X[:-n_val].ravel(), y[:-n_val]]),
            minlength=n_items + 1)
        popularity[0] = 0
        splits = DatasetSplits(samples[:-n_val], samples[-n_val:], [],
                               n_items, popularity)
        self.checkpoint_ = train(self._config(), splits)
        self.model_ = self.checkpoint_.build_model()
        self.schedule_ = self.checkpoint_.schedule()
        self.n_items_ = n_items
        return self

    def _generator(self):
        return torch.Generator().manual_seed(self.seed)

    def predict(self, X):
        """Top-1 next-item id for each history."""
        return self.predict_topk(X, k=1)[:, 0]

    def predict_topk(self, X, k=10):
        check_is_fitted(self, "model_")
        X, _ = self._check_Xy(X, L=self.L)
        gen = self._generator()
        out = np.empty((len(X), k), dtype=np.int64)
        for i, row in enumerate(X):
            ids, _ = recommend(self.model_, self.schedule_, row, k,
                               generator=gen, retrieval=self.retrieval)
            out[i] = ids
        return out

    def score(self, X, y):
        """Hit ratio at 10 over (X, y)."""
        check_is_fitted(self, "model_")
        X, y = self._check_Xy(X, y, self.L)
        ranks = rank_targets(self.model_, self.schedule_, self._samples(X, y),
                             generator=self._generator(),
                             retrieval=self.retrieval,
                             batch_size=self.batch_size)
        return float(np.mean(ranks <= 10))

    def evaluate(self, X, y, ks=(10, 20)):
        check_is_fitted(self, "model_")
        X, y = self._check_Xy(X, y, self.L)
        return evaluate(self.model_, self.schedule_, self._samples(X, y),
                        ks=ks, generator=self._generator(),
                        retrieval=self.retrieval, batch_size=self.batch_size)
