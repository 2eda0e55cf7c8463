"""Synthetic drug-target datasets with planted block structure.

Drugs and targets are dealt round-robin into ``blocks`` communities. Drug
block ``b`` associates with target block ``b`` at rate ``density_in`` and
with every other target block at ``density_out``. Fingerprints draw bits from
a per-block pool, so Tanimoto similarity is high within a block; the
target-target network is denser within blocks, so Jaccard similarity is too.
``sim_noise`` leaks bits and links across blocks.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, DataError
from .ingest import Dataset, EntityCatalog

POOL_BITS = 32
BACKGROUND_BITS = 64
POOL_RATE = 0.6
BACKGROUND_RATE = 0.05
LINK_RATE = 0.3


@dataclass(frozen=True)
class SynthSpec:
    n_drugs: int = 60
    n_targets: int = 50
    blocks: int = 2
    density_in: float = 0.3
    density_out: float = 0.02
    sim_noise: float = 0.1
    seed: int = 42

    def __post_init__(self):
        if self.n_drugs < 1 or self.n_targets < 1:
            raise ConfigError("need at least one drug and one target")
        if self.blocks < 1:
            raise ConfigError("blocks must be at least 1")
        if not 0 <= self.density_out < self.density_in <= 1:
            raise ConfigError("need 0 <= density_out < density_in <= 1")
        if not 0 <= self.sim_noise <= 1:
            raise ConfigError("sim_noise must lie in [0, 1]")

    def expected_positives(self) -> tuple[float, float]:
        """Mean and variance of the number of positive cells."""
        d_blocks = np.bincount(np.arange(self.n_drugs) % self.blocks, minlength=self.blocks)
        t_blocks = np.bincount(np.arange(self.n_targets) % self.blocks, minlength=self.blocks)
        matched = float(d_blocks @ t_blocks)
        other = self.n_drugs * self.n_targets - matched
        p, q = self.density_in, self.density_out
        return matched * p + other * q, matched * p * (1 - p) + other * q * (1 - q)


def generate(spec: SynthSpec) -> Dataset:
    rng = np.random.default_rng(spec.seed)
    nd, nt, B = spec.n_drugs, spec.n_targets, spec.blocks
    drug_block = np.arange(nd) % B
    target_block = np.arange(nt) % B

    matched = drug_block[:, None] == target_block[None, :]
    Y = (rng.random((nd, nt)) < np.where(matched, spec.density_in, spec.density_out)).astype(np.float64)
    if not Y.any():
        raise DataError("generated association matrix has no positives")

    fingerprints = []
    for b in drug_block:
        pool_rate = np.full(B * POOL_BITS, POOL_RATE * spec.sim_noise)
        pool_rate[b * POOL_BITS:(b + 1) * POOL_BITS] = POOL_RATE * (1 - spec.sim_noise)
        rates = np.concatenate([pool_rate, np.full(BACKGROUND_BITS, BACKGROUND_RATE)])
        fingerprints.append(frozenset(int(i) for i in np.flatnonzero(rng.random(rates.size) < rates)))

    same = target_block[:, None] == target_block[None, :]
    link_p = np.where(same, LINK_RATE, LINK_RATE * spec.sim_noise)
    upper = np.triu(rng.random((nt, nt)) < link_p, k=1)
    links = upper | upper.T
    interactions = [frozenset(int(j) for j in np.flatnonzero(row)) for row in links]

    width_d, width_t = len(str(nd)), len(str(nt))
    catalog = EntityCatalog(tuple(f"D{i:0{width_d}d}" for i in range(nd)),
                            tuple(f"T{j:0{width_t}d}" for j in range(nt)))
    return Dataset(catalog, Y, fingerprints=fingerprints, interactions=interactions)


def block_labels(spec: SynthSpec) -> tuple[np.ndarray, np.ndarray]:
    return np.arange(spec.n_drugs) % spec.blocks, np.arange(spec.n_targets) % spec.blocks
