"""scikit-learn style estimator wrapping the full pipeline."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .dlaprls import DlaprlsConfig
from .exceptions import DataError
from .gat import GatConfig
from .kernels import KernelConfig
from .trainer import TrainConfig, fit, predict_scores


def check_kernel(K, n: int, name: str) -> np.ndarray:
    K = check_array(K, dtype=np.float64)
    if K.shape != (n, n):
        raise DataError(f"{name} must be {n} x {n}, got {K.shape}")
    if not np.allclose(K, K.T, atol=1e-12):
        raise DataError(f"{name} must be symmetric")
    return K


def check_association(Y) -> np.ndarray:
    Y = check_array(Y, dtype=np.float64)
    if not np.isin(Y, (0.0, 1.0)).all():
        raise DataError("association matrix entries must be 0 or 1")
    return Y


class MKDTI(BaseEstimator):
    """Multi-kernel drug-target interaction predictor.

    ``fit(Y, drug_similarity=..., target_similarity=...)`` trains on a binary
    drug x target matrix; ``predict()`` returns the score matrix, or the
    scores at given ``(drug, target)`` index pairs.

    Parameters mirror :class:`TrainConfig` and its nested configs, flattened
    so that ``get_params``/``set_params``/``clone`` work.
    """

    def __init__(self, num_layers=3, heads=8, layer_dims=(384, 192, 96), input_dim=512,
                 leaky_slope=0.2, head_merge="concat", activation="sigmoid",
                 gammas=(2.0 ** -5, 2.0 ** -3, 2.0 ** -3), fusion_weights="uniform",
                 normalize_bandwidth=False, lambda_d=2.0 ** -3, lambda_t=2.0 ** -4, jitter=1e-8,
                 inner_passes=1, laplacian="symmetric", iterations=20, learning_rate=0.001,
                 tau=0.0, top_k=None, kernel_selector="all", random_state=0):
        self.num_layers = num_layers
        self.heads = heads
        self.layer_dims = layer_dims
        self.input_dim = input_dim
        self.leaky_slope = leaky_slope
        self.head_merge = head_merge
        self.activation = activation
        self.gammas = gammas
        self.fusion_weights = fusion_weights
        self.normalize_bandwidth = normalize_bandwidth
        self.lambda_d = lambda_d
        self.lambda_t = lambda_t
        self.jitter = jitter
        self.inner_passes = inner_passes
        self.laplacian = laplacian
        self.iterations = iterations
        self.learning_rate = learning_rate
        self.tau = tau
        self.top_k = top_k
        self.kernel_selector = kernel_selector
        self.random_state = random_state

    @classmethod
    def from_config(cls, config: TrainConfig) -> "MKDTI":
        return cls(**_flat_params(config))

    def to_config(self) -> TrainConfig:
        return TrainConfig(
            iterations=self.iterations, learning_rate=self.learning_rate,
            seed=int(self.random_state or 0), tau=self.tau, top_k=self.top_k,
            kernel_selector=self.kernel_selector,
            gat=GatConfig(num_layers=self.num_layers, heads=self.heads, layer_dims=tuple(self.layer_dims),
                          input_dim=self.input_dim, leaky_slope=self.leaky_slope,
                          head_merge=self.head_merge, activation=self.activation),
            kernels=KernelConfig(gammas=tuple(self.gammas), fusion_weights=self.fusion_weights,
                                 normalize_bandwidth=self.normalize_bandwidth),
            dlaprls=DlaprlsConfig(lambda_d=self.lambda_d, lambda_t=self.lambda_t, jitter=self.jitter,
                                  inner_passes=self.inner_passes, laplacian=self.laplacian))

    def fit(self, Y, drug_similarity=None, target_similarity=None, log_path=None):
        Y = check_association(Y)
        nd, nt = Y.shape
        if drug_similarity is None or target_similarity is None:
            raise DataError("fit needs drug_similarity and target_similarity")
        kd = check_kernel(drug_similarity, nd, "drug_similarity")
        kt = check_kernel(target_similarity, nt, "target_similarity")
        config = self.to_config()
        self.model_, self.problem_, self.scores_ = fit(kd, kt, Y, config, log_path=log_path)
        self.config_ = config
        self.loss_history_ = list(self.model_.history)
        self.n_drugs_, self.n_targets_ = nd, nt
        return self

    def predict(self, pairs=None) -> np.ndarray:
        """Score matrix, or scores at the rows of an ``n x 2`` array of (drug, target) indices."""
        check_is_fitted(self, "scores_")
        if pairs is None:
            return self.scores_.copy()
        pairs = check_array(pairs, dtype=np.intp)
        if pairs.shape[1] != 2:
            raise DataError("pairs must have two columns (drug index, target index)")
        return self.scores_[pairs[:, 0], pairs[:, 1]]

    def refresh_scores(self) -> np.ndarray:
        """Recompute scores from the current model state (e.g. after loading a checkpoint)."""
        check_is_fitted(self, "model_")
        self.scores_ = predict_scores(self.model_, self.problem_, self.config_)
        return self.scores_


def _flat_params(config: TrainConfig) -> dict:
    g, k, d = config.gat, config.kernels, config.dlaprls
    return dict(num_layers=g.num_layers, heads=g.heads, layer_dims=tuple(g.layer_dims),
                input_dim=g.input_dim, leaky_slope=g.leaky_slope, head_merge=g.head_merge,
                activation=g.activation, gammas=tuple(k.gammas), fusion_weights=k.fusion_weights,
                normalize_bandwidth=k.normalize_bandwidth, lambda_d=d.lambda_d, lambda_t=d.lambda_t,
                jitter=d.jitter, inner_passes=d.inner_passes, laplacian=d.laplacian,
                iterations=config.iterations, learning_rate=config.learning_rate, tau=config.tau,
                top_k=config.top_k, kernel_selector=config.kernel_selector, random_state=config.seed)
