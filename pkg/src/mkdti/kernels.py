"""Gaussian interaction profile kernels over embeddings, and kernel fusion."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .exceptions import ConfigError, DataError


@dataclass
class KernelConfig:
    gammas: tuple[float, ...] = (2.0 ** -5, 2.0 ** -3, 2.0 ** -3)
    fusion_weights: str | tuple[float, ...] = "uniform"
    normalize_bandwidth: bool = False

    def __post_init__(self):
        self.gammas = tuple(float(g) for g in self.gammas)
        if not self.gammas or any(g <= 0 for g in self.gammas):
            raise ConfigError(f"bandwidths must be positive, got {self.gammas}")
        if not isinstance(self.fusion_weights, str):
            self.fusion_weights = tuple(float(w) for w in self.fusion_weights)
            if any(w < 0 for w in self.fusion_weights) or not np.isclose(sum(self.fusion_weights), 1.0):
                raise ConfigError("explicit fusion weights must be non-negative and sum to 1")
        elif self.fusion_weights != "uniform":
            raise ConfigError(f"fusion_weights must be 'uniform' or a list, got {self.fusion_weights!r}")


def gip_kernel(H, gamma: float, normalize: bool = False):
    """``K(i, j) = exp(-gamma * ||h_i - h_j||^2)`` between the rows of ``H``.

    Tensors stay on their tape; a plain array gives a plain array back.
    With ``normalize`` the bandwidth is divided by the mean squared row norm,
    which is treated as a constant for differentiation.
    """
    if gamma <= 0:
        raise ConfigError("gamma must be positive")
    if not isinstance(H, ad.Tensor):
        return gip_kernel(ad.Tape().constant(H), gamma, normalize).values
    if H.shape[0] < 1:
        raise DataError("need at least one row")
    if not np.all(np.isfinite(H.values)):
        raise DataError("embeddings contain non-finite values")
    if normalize:
        mean_sq = float(np.mean(np.sum(H.values ** 2, axis=1)))
        if mean_sq > 0:
            gamma = gamma / mean_sq
    return ad.exp_neg(ad.pairwise_sq_dists(H), gamma)


def split_and_kernelize(embeddings, gammas: Sequence[float], normalize: bool = False):
    """One drug kernel and one target kernel per encoder layer."""
    if len(gammas) != len(embeddings.layers):
        raise ConfigError(f"{len(gammas)} bandwidths for {len(embeddings.layers)} layers")
    drug, target = [], []
    for l, gamma in enumerate(gammas):
        drug.append(gip_kernel(embeddings.drug_rows(l), gamma, normalize))
        target.append(gip_kernel(embeddings.target_rows(l), gamma, normalize))
    return drug, target


@dataclass
class KernelBank:
    """Ordered kernel collections for both sides plus their fusion weights.

    Entries may be arrays (fixed data) or tensors (on a tape).
    """

    drug: list
    target: list
    tags: list[str]
    drug_weights: np.ndarray = field(default=None)
    target_weights: np.ndarray = field(default=None)

    def __post_init__(self):
        if not (len(self.drug) == len(self.target) == len(self.tags)) or not self.drug:
            raise DataError("kernel bank sides and tags must have equal, non-zero length")
        m = len(self.drug)
        if self.drug_weights is None:
            self.drug_weights = np.full(m, 1.0 / m)
        if self.target_weights is None:
            self.target_weights = np.full(m, 1.0 / m)
        for w in (self.drug_weights, self.target_weights):
            w = np.asarray(w, dtype=np.float64)
            if w.shape != (m,) or (w < 0).any() or not np.isclose(w.sum(), 1.0):
                raise DataError("fusion weights must be non-negative, one per kernel, summing to 1")
        self.drug_weights = np.asarray(self.drug_weights, dtype=np.float64)
        self.target_weights = np.asarray(self.target_weights, dtype=np.float64)

    def __len__(self):
        return len(self.drug)


def build_bank(base_drug, base_target, layer_drug, layer_target, selector: str = "all",
               weights="uniform") -> KernelBank:
    """Assemble ``[base, layer 1, ..., layer L]`` or the subset named by ``selector``.

    ``selector`` is ``all``, ``base_only`` or ``layer:l`` (1-based).
    Explicit ``weights`` only apply to the full bank.
    """
    drug = [base_drug, *layer_drug]
    target = [base_target, *layer_target]
    tags = ["base"] + [f"layer_{l + 1}" for l in range(len(layer_drug))]
    if selector == "all":
        keep = list(range(len(tags)))
    elif selector == "base_only":
        keep = [0]
    elif selector.startswith("layer:"):
        try:
            l = int(selector.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"bad kernel selector {selector!r}") from None
        if not 1 <= l <= len(layer_drug):
            raise ConfigError(f"selector {selector!r} out of range for {len(layer_drug)} layers")
        keep = [l]
    else:
        raise ConfigError(f"bad kernel selector {selector!r}")
    w = None
    if not isinstance(weights, str):
        if selector != "all":
            raise ConfigError("explicit fusion weights need selector 'all'")
        w = np.asarray(weights, dtype=np.float64)
    return KernelBank([drug[i] for i in keep], [target[i] for i in keep], [tags[i] for i in keep], w, w)


def _weighted_sum(mats, weights):
    if not any(isinstance(m, ad.Tensor) for m in mats):
        shapes = {np.shape(m) for m in mats}
        if len(shapes) != 1:
            raise DataError(f"kernel shapes differ: {sorted(shapes)}")
        return sum(w * np.asarray(m, dtype=np.float64) for w, m in zip(weights, mats))
    tape = next(m.tape for m in mats if isinstance(m, ad.Tensor))
    tensors = [m if isinstance(m, ad.Tensor) else tape.constant(m) for m in mats]
    if len({t.shape for t in tensors}) != 1:
        raise DataError(f"kernel shapes differ: {sorted({t.shape for t in tensors})}")
    out = ad.scale(tensors[0], weights[0])
    for w, t in zip(weights[1:], tensors[1:]):
        out = ad.add(out, ad.scale(t, w))
    return out


def fuse(bank: KernelBank):
    """Convex combinations ``K_d = sum_i w_i S_i^d`` and ``K_t = sum_i w_i S_i^t``."""
    return _weighted_sum(bank.drug, bank.drug_weights), _weighted_sum(bank.target, bank.target_weights)
