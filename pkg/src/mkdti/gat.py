"""Multi-head graph attention encoder with self loops.

Every node attends over its neighbor list (which always contains the node
itself). A layer runs ``heads`` independent attention heads and merges them
by column concatenation or by averaging before the activation. The encoder
keeps every layer's output, since each one feeds its own kernel.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .exceptions import ConfigError, DataError

PARAMS_FORMAT_VERSION = 1


@dataclass
class GatConfig:
    num_layers: int = 3
    heads: int = 8
    layer_dims: tuple[int, ...] = (384, 192, 96)
    input_dim: int = 512
    leaky_slope: float = 0.2
    head_merge: str = "concat"
    activation: str = "sigmoid"
    seed: int = 0

    def __post_init__(self):
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        if self.num_layers < 1 or len(self.layer_dims) != self.num_layers:
            raise ConfigError(f"layer_dims {self.layer_dims} must list num_layers={self.num_layers} sizes")
        if self.heads < 1 or self.input_dim < 1:
            raise ConfigError("heads and input_dim must be positive")
        if self.head_merge not in ("concat", "average"):
            raise ConfigError(f"head_merge must be concat or average, got {self.head_merge!r}")
        if self.activation not in ("sigmoid", "identity"):
            raise ConfigError(f"activation must be sigmoid or identity, got {self.activation!r}")
        if self.head_merge == "concat":
            bad = [d for d in self.layer_dims if d % self.heads]
            if bad:
                raise ConfigError(f"layer dims {bad} not divisible by {self.heads} heads")

    def head_dims(self) -> list[int]:
        if self.head_merge == "concat":
            return [d // self.heads for d in self.layer_dims]
        return list(self.layer_dims)

    def in_dims(self) -> list[int]:
        return [self.input_dim, *self.layer_dims[:-1]]


@dataclass
class HeadParams:
    W: np.ndarray  # in_dim x head_dim
    a: np.ndarray  # 2*head_dim x 1


@dataclass
class EmbeddingSet:
    """Per-layer node embeddings; the first ``n_drugs`` rows are drugs."""

    layers: list
    n_drugs: int
    n_targets: int = field(default=0)

    def drug_rows(self, layer: int) -> ad.Tensor:
        return ad.gather_rows(self.layers[layer], np.arange(self.n_drugs))

    def target_rows(self, layer: int) -> ad.Tensor:
        return ad.gather_rows(self.layers[layer], np.arange(self.n_drugs, self.n_drugs + self.n_targets))


def _uniform(rng, shape, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init_features(n: int, input_dim: int, seed: int) -> np.ndarray:
    """Random node features, uniform in +-sqrt(6 / (2 * input_dim))."""
    if n < 1:
        raise ValueError("need at least one node")
    return _uniform(np.random.default_rng(seed), (n, input_dim), input_dim, input_dim)


def init_params(config: GatConfig) -> list[list[HeadParams]]:
    """Encoder weights; each (layer, head) pair draws from its own seed stream."""
    params = []
    for layer, (din, dh) in enumerate(zip(config.in_dims(), config.head_dims())):
        heads = []
        for k in range(config.heads):
            rng = np.random.default_rng([config.seed, 1, layer, k])
            heads.append(HeadParams(_uniform(rng, (din, dh), din, dh),
                                    _uniform(rng, (2 * dh, 1), 2 * dh, 1)))
        params.append(heads)
    return params


def params_as_leaves(tape: ad.Tape, params, requires_grad=True):
    """Put every weight on ``tape``; returns the nested tensors and a flat name map."""
    nested, flat = [], {}
    for l, heads in enumerate(params):
        row = []
        for k, hp in enumerate(heads):
            W = tape.leaf(hp.W, requires_grad)
            a = tape.leaf(hp.a, requires_grad)
            flat[f"layer{l}.head{k}.W"] = W
            flat[f"layer{l}.head{k}.a"] = a
            row.append((W, a))
        nested.append(row)
    return nested, flat


def flatten_params(params) -> dict[str, np.ndarray]:
    out = {}
    for l, heads in enumerate(params):
        for k, hp in enumerate(heads):
            out[f"layer{l}.head{k}.W"] = hp.W
            out[f"layer{l}.head{k}.a"] = hp.a
    return out


def unflatten_params(flat: dict[str, np.ndarray], config: GatConfig):
    return [[HeadParams(np.array(flat[f"layer{l}.head{k}.W"]), np.array(flat[f"layer{l}.head{k}.a"]))
             for k in range(config.heads)] for l in range(config.num_layers)]


def _check_edges(owners, nbrs, n):
    for arr in (owners, nbrs):
        if len(arr) and (arr.min() < 0 or arr.max() >= n):
            raise IndexError(f"edge index out of range for {n} nodes")


def _edge_logits(Wh, a, owners, nbrs, slope):
    dst = ad.gather_rows(Wh, nbrs)
    pair = ad.concat_cols([ad.gather_rows(Wh, owners), dst])
    return ad.leaky_relu(ad.matmul(pair, a), slope), dst


def attention_logits(W, a, H, owners, nbrs, slope=0.2) -> ad.Tensor:
    """Per-edge score ``LeakyReLU(a^T [W h_i || W h_j])`` for edges ``(i, j)``."""
    owners = np.asarray(owners, dtype=np.intp)
    nbrs = np.asarray(nbrs, dtype=np.intp)
    _check_edges(owners, nbrs, H.shape[0])
    return _edge_logits(ad.matmul(H, W), a, owners, nbrs, slope)[0]


def attention_weights(logits, owners, n=None) -> ad.Tensor:
    return ad.segment_softmax(logits, owners, n)


def _activate(x, activation):
    return ad.sigmoid(x) if activation == "sigmoid" else x


def head_aggregate(W, a, H, owners, nbrs, slope=0.2) -> ad.Tensor:
    """Attention-weighted neighbor sum for one head, before the activation."""
    n = H.shape[0]
    owners = np.asarray(owners, dtype=np.intp)
    nbrs = np.asarray(nbrs, dtype=np.intp)
    _check_edges(owners, nbrs, n)
    logits, dst = _edge_logits(ad.matmul(H, W), a, owners, nbrs, slope)
    alpha = attention_weights(logits, owners, n)
    return ad.segment_weighted_sum(dst, alpha, owners, n)


def head_forward(W, a, H, owners, nbrs, slope=0.2, activation="sigmoid") -> ad.Tensor:
    return _activate(head_aggregate(W, a, H, owners, nbrs, slope), activation)


def layer_forward(heads, H, owners, nbrs, head_merge="concat", slope=0.2,
                  activation="sigmoid") -> ad.Tensor:
    """Run all heads of one layer; ``heads`` is a sequence of ``(W, a)`` pairs."""
    aggs = [head_aggregate(W, a, H, owners, nbrs, slope) for W, a in heads]
    if head_merge == "concat":
        outs = [_activate(x, activation) for x in aggs]
        return outs[0] if len(outs) == 1 else ad.concat_cols(outs)
    merged = aggs[0] if len(aggs) == 1 else ad.mean_stack(aggs)
    return _activate(merged, activation)


def encode(config: GatConfig, heads_by_layer, features: ad.Tensor, adjacency) -> EmbeddingSet:
    """Run the encoder and keep every layer's output on the tape.

    ``heads_by_layer`` holds ``(W, a)`` tensor pairs per layer, as returned
    by :func:`params_as_leaves`.
    """
    if len(heads_by_layer) != config.num_layers:
        raise DataError(f"expected {config.num_layers} layers of parameters, got {len(heads_by_layer)}")
    n = adjacency.n_nodes
    if features.shape[0] != n:
        raise DataError(f"features have {features.shape[0]} rows, adjacency has {n} nodes")
    owners, nbrs = adjacency.edges()
    H = features
    layers = []
    for l, heads in enumerate(heads_by_layer):
        for W, _ in heads:
            if W.shape[0] != H.shape[1]:
                raise DataError(f"layer {l}: weight expects input dim {W.shape[0]}, got {H.shape[1]}")
        H = layer_forward(heads, H, owners, nbrs, config.head_merge, config.leaky_slope, config.activation)
        layers.append(H)
    return EmbeddingSet(layers, adjacency.n_drugs, adjacency.n_targets)


def save_params(path, config: GatConfig, params) -> None:
    meta = {"format_version": PARAMS_FORMAT_VERSION, "config": asdict(config),
            "shapes": {k: list(v.shape) for k, v in flatten_params(params).items()}}
    np.savez(path, __meta__=np.array(json.dumps(meta)), **flatten_params(params))


def load_params(path):
    """Returns ``(config, params)`` from a file written by :func:`save_params`."""
    with np.load(Path(path), allow_pickle=False) as z:
        meta = json.loads(str(z["__meta__"]))
        if meta.get("format_version") != PARAMS_FORMAT_VERSION:
            raise DataError(f"unsupported parameter file version {meta.get('format_version')}")
        flat = {k: z[k] for k in z.files if k != "__meta__"}
    config = GatConfig(**meta["config"])
    for k, shape in meta["shapes"].items():
        if list(flat[k].shape) != shape:
            raise DataError(f"parameter {k} has shape {flat[k].shape}, metadata says {shape}")
    return config, unflatten_params(flat, config)
