"""Dual Laplacian regularized least squares over a drug kernel and a target kernel.

The objective for coefficient matrices ``alpha_d`` (drugs x targets) and
``alpha_t`` (targets x drugs) is::

    J = ||K_d alpha_d + (K_t alpha_t)^T - 2 Y||_F^2
        + lambda_d tr(alpha_d^T L_d alpha_d) + lambda_t tr(alpha_t^T L_t alpha_t)

and each coefficient matrix has a closed-form minimizer with the other held
fixed. Predictions are ``(K_d alpha_d + (K_t alpha_t)^T) / 2``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from . import autodiff as ad
from .exceptions import ConfigError, NumericalError

logger = logging.getLogger(__name__)

REFINE_STEPS = 4


@dataclass
class DlaprlsConfig:
    lambda_d: float = 2.0 ** -3
    lambda_t: float = 2.0 ** -4
    jitter: float = 1e-8
    inner_passes: int = 1
    laplacian: str = "symmetric"

    def __post_init__(self):
        if self.lambda_d < 0 or self.lambda_t < 0:
            raise ConfigError("regularization weights must be non-negative")
        if self.jitter <= 0:
            raise ConfigError("jitter must be positive")
        if self.inner_passes < 1:
            raise ConfigError("inner_passes must be at least 1")
        if self.laplacian not in ("symmetric", "printed"):
            raise ConfigError(f"laplacian must be 'symmetric' or 'printed', got {self.laplacian!r}")

    @property
    def right_exponent(self) -> float:
        return -0.5 if self.laplacian == "symmetric" else 0.5


@dataclass
class AlphaPair:
    alpha_d: np.ndarray
    alpha_t: np.ndarray

    @classmethod
    def zeros(cls, n_drugs: int, n_targets: int) -> "AlphaPair":
        return cls(np.zeros((n_drugs, n_targets)), np.zeros((n_targets, n_drugs)))


@dataclass
class LaplacianPair:
    L_d: np.ndarray
    L_t: np.ndarray
    D_d: np.ndarray
    D_t: np.ndarray


def degree_matrix(K) -> np.ndarray:
    return np.diag(np.asarray(K, dtype=np.float64).sum(axis=1))


def normalized_laplacian(K, D=None, right_exponent: float = -0.5, eps: float = 1e-8) -> np.ndarray:
    """``D^{-1/2} (D - K) D^{right_exponent}``; zero degrees are replaced by ``eps``."""
    K = np.asarray(K, dtype=np.float64)
    d = np.diag(D).copy() if D is not None else K.sum(axis=1)
    bad = d <= 0
    if bad.any():
        logger.warning("%d zero-degree rows; degree set to %g", int(bad.sum()), eps)
        d[bad] = eps
    delta = np.diag(d) - K
    return (d ** -0.5)[:, None] * delta * (d ** right_exponent)[None, :]


def laplacians(K_d, K_t, config: DlaprlsConfig | None = None) -> LaplacianPair:
    config = config or DlaprlsConfig()
    D_d, D_t = degree_matrix(K_d), degree_matrix(K_t)
    r = config.right_exponent
    return LaplacianPair(normalized_laplacian(K_d, D_d, r), normalized_laplacian(K_t, D_t, r), D_d, D_t)


def loss_terms(K_d, K_t, alpha: AlphaPair, lap: LaplacianPair, Y_train, lambda_d, lambda_t):
    """``(J, data_term, reg_d, reg_t)`` as floats."""
    R = K_d @ alpha.alpha_d + (K_t @ alpha.alpha_t).T - 2.0 * Y_train
    data = float(np.sum(R * R))
    reg_d = float(lambda_d * np.sum(alpha.alpha_d * (lap.L_d @ alpha.alpha_d)))
    reg_t = float(lambda_t * np.sum(alpha.alpha_t * (lap.L_t @ alpha.alpha_t)))
    return data + reg_d + reg_t, data, reg_d, reg_t


def loss(K_d, K_t, alpha: AlphaPair, lap: LaplacianPair, Y_train, lambda_d, lambda_t) -> float:
    return loss_terms(K_d, K_t, alpha, lap, Y_train, lambda_d, lambda_t)[0]


def loss_tensor(K_d: ad.Tensor, K_t: ad.Tensor, alpha: AlphaPair, Y_train, lambda_d, lambda_t,
                right_exponent: float = -0.5):
    """The objective on the kernels' tape, with ``alpha`` held constant.

    Laplacians are built on the tape from the kernels, so gradients reach the
    kernels through both the data term and the regularizers.
    Returns ``(J, data_term, reg_d, reg_t)`` tensors.
    """
    tape = K_d.tape
    ad_ = tape.constant(alpha.alpha_d)
    at_ = tape.constant(alpha.alpha_t)
    R = ad.add(ad.add(ad.matmul(K_d, ad_), ad.transpose(ad.matmul(K_t, at_))),
               tape.constant(-2.0 * np.asarray(Y_train, dtype=np.float64)))
    data = ad.frobenius_sq(R)
    reg_d = ad.scale(ad.trace_quadratic(ad_, ad.normalized_laplacian(K_d, right_exponent)), lambda_d)
    reg_t = ad.scale(ad.trace_quadratic(at_, ad.normalized_laplacian(K_t, right_exponent)), lambda_t)
    return ad.add(ad.add(data, reg_d), reg_t), data, reg_d, reg_t


def _solve(M: np.ndarray, rhs: np.ndarray, jitter: float) -> np.ndarray:
    """Solve ``M x = rhs`` for symmetric PSD ``M`` via a jittered Cholesky factor.

    The jittered factor preconditions a few steps of iterative refinement
    against the unjittered system.
    """
    scale_ = max(float(np.mean(np.abs(np.diag(M)))), np.finfo(float).tiny)
    last_err = None
    for mult in (1.0, 10.0, 100.0):
        Mj = M + (jitter * mult * scale_) * np.eye(M.shape[0])
        try:
            factor = linalg.cho_factor(Mj, check_finite=False)
            solve = lambda b: linalg.cho_solve(factor, b, check_finite=False)  # noqa: E731
        except linalg.LinAlgError:
            # indefinite only with the non-symmetric Laplacian variant
            try:
                factor = linalg.lu_factor(Mj, check_finite=False)
            except (linalg.LinAlgError, ValueError) as exc:
                last_err = exc
                continue
            solve = lambda b: linalg.lu_solve(factor, b, check_finite=False)  # noqa: E731
        x = solve(rhs)
        if not np.all(np.isfinite(x)):
            last_err = "non-finite solution"
            continue
        res = rhs - M @ x
        res_norm = np.linalg.norm(res)
        for _ in range(REFINE_STEPS):
            x_new = x + solve(res)
            res_new = rhs - M @ x_new
            new_norm = np.linalg.norm(res_new)
            if not new_norm < res_norm:
                break
            x, res, res_norm = x_new, res_new, new_norm
        return x
    cond = np.linalg.cond(M) if np.all(np.isfinite(M)) else float("inf")
    raise NumericalError(f"linear solve failed after jitter escalation (cond={cond:.3e}): {last_err}")


def _system(K, lap, lam):
    K = np.asarray(K, dtype=np.float64)
    KK = K.T @ K
    return 0.5 * (KK + KK.T) + lam * 0.5 * (lap + lap.T)


def update_alpha_d(K_d, K_t, alpha_t, Y_train, L_d, lambda_d, jitter=1e-8) -> np.ndarray:
    """Minimizer of the objective over ``alpha_d`` with ``alpha_t`` fixed."""
    rhs = K_d.T @ (2.0 * Y_train - alpha_t.T @ K_t.T)
    return _solve(_system(K_d, L_d, lambda_d), rhs, jitter)


def update_alpha_t(K_t, K_d, alpha_d, Y_train, L_t, lambda_t, jitter=1e-8) -> np.ndarray:
    """Minimizer of the objective over ``alpha_t`` with ``alpha_d`` fixed (targets x drugs)."""
    rhs = K_t.T @ (2.0 * Y_train.T - alpha_d.T @ K_d.T)
    return _solve(_system(K_t, L_t, lambda_t), rhs, jitter)


def grad_alpha_d(K_d, K_t, alpha: AlphaPair, Y_train, L_d, lambda_d) -> np.ndarray:
    R = K_d @ alpha.alpha_d + alpha.alpha_t.T @ K_t.T - 2.0 * Y_train
    return 2.0 * K_d.T @ R + lambda_d * (L_d + L_d.T) @ alpha.alpha_d


def grad_alpha_t(K_t, K_d, alpha: AlphaPair, Y_train, L_t, lambda_t) -> np.ndarray:
    R = K_t @ alpha.alpha_t + alpha.alpha_d.T @ K_d.T - 2.0 * Y_train.T
    return 2.0 * K_t.T @ R + lambda_t * (L_t + L_t.T) @ alpha.alpha_t


def alternate(K_d, K_t, Y_train, alpha: AlphaPair, lap: LaplacianPair, config: DlaprlsConfig,
              passes: int | None = None) -> AlphaPair:
    """Gauss-Seidel sweeps: ``alpha_d`` first, then ``alpha_t`` with the fresh ``alpha_d``."""
    a_d, a_t = alpha.alpha_d, alpha.alpha_t
    for _ in range(passes or config.inner_passes):
        a_d = update_alpha_d(K_d, K_t, a_t, Y_train, lap.L_d, config.lambda_d, config.jitter)
        a_t = update_alpha_t(K_t, K_d, a_d, Y_train, lap.L_t, config.lambda_t, config.jitter)
    return AlphaPair(a_d, a_t)


def predict(K_d, K_t, alpha: AlphaPair) -> np.ndarray:
    return 0.5 * (K_d @ alpha.alpha_d + (K_t @ alpha.alpha_t).T)
