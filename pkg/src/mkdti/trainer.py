"""Joint optimization: closed-form coefficient updates plus Adam on the encoder.

Each outer iteration re-records the forward pass (encoder, per-layer GIP
kernels, fusion), refreshes both coefficient matrices in closed form on the
current kernels, then backpropagates the objective with the coefficients
held constant and takes one Adam step on every encoder weight.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import dlaprls as dl
from .exceptions import ConfigError, DataError, NumericalError
from .gat import (GatConfig, encode, flatten_params, init_features, init_params,
                  params_as_leaves, unflatten_params)
from .ingest import HeteroAdjacency, build_hetero_adjacency
from .kernels import KernelConfig, build_bank, fuse, split_and_kernelize

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    """Training settings; ``seed`` seeds both the node features and the encoder weights."""

    iterations: int = 20
    learning_rate: float = 0.001
    seed: int = 0
    tau: float = 0.0
    top_k: int | None = None
    kernel_selector: str = "all"
    gat: GatConfig = field(default_factory=GatConfig)
    kernels: KernelConfig = field(default_factory=KernelConfig)
    dlaprls: dl.DlaprlsConfig = field(default_factory=dl.DlaprlsConfig)

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError("iterations must be at least 1")
        if self.learning_rate < 0:
            raise ConfigError("learning rate must be non-negative")
        if len(self.kernels.gammas) != self.gat.num_layers:
            raise ConfigError(f"{len(self.kernels.gammas)} bandwidths for {self.gat.num_layers} layers")


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state: AdamState, grads: dict, params: dict):
    """One bias-corrected Adam update. Returns ``(new_params, state)``; ``state`` is updated in place."""
    if set(grads) != set(params):
        raise DataError("gradients must cover exactly the registered parameters")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    out = {}
    for name, theta in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != theta.shape:
            raise DataError(f"gradient for {name} has shape {g.shape}, parameter {theta.shape}")
        m = b1 * state.m.get(name, np.zeros_like(theta)) + (1 - b1) * g
        v = b2 * state.v.get(name, np.zeros_like(theta)) + (1 - b2) * g * g
        state.m[name], state.v[name] = m, v
        m_hat = m / (1 - b1 ** state.t)
        v_hat = v / (1 - b2 ** state.t)
        out[name] = theta - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return out, state


@dataclass
class ModelState:
    params: list
    features: np.ndarray
    alpha: dl.AlphaPair
    adam: AdamState
    history: list = field(default_factory=list)
    log: list = field(default_factory=list)
    n_kernels: int = 0


@dataclass
class Problem:
    """Fixed inputs of one training run."""

    adjacency: HeteroAdjacency
    base_drug: np.ndarray
    base_target: np.ndarray
    Y_train: np.ndarray

    @classmethod
    def build(cls, base_drug, base_target, Y_train, config: TrainConfig) -> "Problem":
        Y_train = np.asarray(Y_train, dtype=np.float64)
        adj = build_hetero_adjacency(base_drug, base_target, Y_train, config.tau, config.top_k)
        return cls(adj, adj.drug_similarity, adj.target_similarity, Y_train)


def init_model(problem: Problem, config: TrainConfig) -> ModelState:
    gat = replace(config.gat, seed=config.seed)
    nd, nt = problem.Y_train.shape
    return ModelState(params=init_params(gat),
                      features=init_features(nd + nt, gat.input_dim, config.seed),
                      alpha=dl.AlphaPair.zeros(nd, nt),
                      adam=AdamState(lr=config.learning_rate))


def fused_kernels(nested, features: np.ndarray, problem: Problem, config: TrainConfig, tape: ad.Tape):
    """Encoder, per-layer kernels and fusion for parameter tensors ``nested``.

    Returns ``(K_d, K_t, bank)``; the kernels are tensors on ``tape``.
    """
    if config.kernel_selector == "base_only":
        layer_d, layer_t = [], []
        bank = build_bank(problem.base_drug, problem.base_target, layer_d, layer_t, "base_only")
    else:
        emb = encode(config.gat, nested, tape.constant(features), problem.adjacency)
        layer_d, layer_t = split_and_kernelize(emb, config.kernels.gammas, config.kernels.normalize_bandwidth)
        bank = build_bank(tape.constant(problem.base_drug), tape.constant(problem.base_target),
                          layer_d, layer_t, config.kernel_selector, config.kernels.fusion_weights)
    K_d, K_t = fuse(bank)
    if not isinstance(K_d, ad.Tensor):
        K_d, K_t = tape.constant(K_d), tape.constant(K_t)
    return K_d, K_t, bank


def forward_kernels(model: ModelState, problem: Problem, config: TrainConfig, tape: ad.Tape,
                    requires_grad: bool = True):
    """Record encoder, kernels and fusion on ``tape``. Returns ``(K_d, K_t, leaves, bank)``."""
    nested, leaves = params_as_leaves(tape, model.params, requires_grad)
    K_d, K_t, bank = fused_kernels(nested, model.features, problem, config, tape)
    return K_d, K_t, leaves, bank


def _param_norms(model: ModelState) -> str:
    return ", ".join(f"{k}={np.linalg.norm(v):.3e}" for k, v in flatten_params(model.params).items())


def train_iteration(model: ModelState, problem: Problem, config: TrainConfig) -> ModelState:
    try:
        tape = ad.Tape()
        K_d, K_t, leaves, bank = forward_kernels(model, problem, config, tape)
        model.n_kernels = len(bank)
        kd, kt = K_d.values, K_t.values
        lap = dl.laplacians(kd, kt, config.dlaprls)
        alpha = dl.alternate(kd, kt, problem.Y_train, model.alpha, lap, config.dlaprls)
        J, data, reg_d, reg_t = dl.loss_tensor(K_d, K_t, alpha, problem.Y_train, config.dlaprls.lambda_d,
                                               config.dlaprls.lambda_t, config.dlaprls.right_exponent)
        tape.backward(J)
    except NumericalError as exc:
        raise NumericalError(f"{exc}; parameter norms: {_param_norms(model)}") from exc
    if not np.isfinite(J.item()):
        raise NumericalError(f"non-finite loss; parameter norms: {_param_norms(model)}")
    grads = {name: t.grad for name, t in leaves.items()}
    flat, adam = adam_step(model.adam, grads, flatten_params(model.params))
    model.params = unflatten_params(flat, config.gat)
    model.alpha = alpha
    model.adam = adam
    model.history.append(J.item())
    model.log.append((J.item(), data.item(), reg_d.item(), reg_t.item()))
    return model


def predict_scores(model: ModelState, problem: Problem, config: TrainConfig) -> np.ndarray:
    tape = ad.Tape()
    K_d, K_t, _, _ = forward_kernels(model, problem, config, tape, requires_grad=False)
    return dl.predict(K_d.values, K_t.values, model.alpha)


def fit(base_drug, base_target, Y_train, config: TrainConfig, iterations: int | None = None,
        log_path=None):
    """Train from scratch and return ``(model, problem, Y_star)``.

    ``iterations`` overrides ``config.iterations`` (0 leaves the model at its
    initialization).
    """
    problem = Problem.build(base_drug, base_target, Y_train, config)
    if not problem.Y_train.any():
        raise DataError("training matrix has no positive entries")
    model = init_model(problem, config)
    n_iter = config.iterations if iterations is None else iterations
    for it in range(n_iter):
        train_iteration(model, problem, config)
        logger.debug("iteration %d: J=%.6g", it + 1, model.history[-1])
    if log_path is not None:
        write_training_log(log_path, model)
    return model, problem, predict_scores(model, problem, config)


def write_training_log(path, model: ModelState) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, (J, data, rd, rt) in enumerate(model.log, start=1):
            fh.write(f"{i}\t{J!r}\t{data!r}\t{rd!r}\t{rt!r}\n")


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def config_to_dict(config: TrainConfig) -> dict:
    return asdict(config)


def config_from_dict(d: dict) -> TrainConfig:
    d = dict(d)
    return TrainConfig(gat=GatConfig(**d.pop("gat", {})), kernels=KernelConfig(**d.pop("kernels", {})),
                       dlaprls=dl.DlaprlsConfig(**d.pop("dlaprls", {})), **d)


def save_checkpoint(path, model: ModelState, config: TrainConfig, extra: dict | None = None) -> None:
    """Write the full model state (and any ``extra`` arrays) to one ``.npz`` file."""
    meta = {"format_version": CHECKPOINT_VERSION, "config": config_to_dict(config),
            "adam": {"lr": model.adam.lr, "beta1": model.adam.beta1, "beta2": model.adam.beta2,
                     "eps": model.adam.eps, "t": model.adam.t},
            "history": model.history, "log": model.log}
    arrays = {f"param/{k}": v for k, v in flatten_params(model.params).items()}
    arrays.update({f"adam_m/{k}": v for k, v in model.adam.m.items()})
    arrays.update({f"adam_v/{k}": v for k, v in model.adam.v.items()})
    arrays["features"] = model.features
    arrays["alpha_d"] = model.alpha.alpha_d
    arrays["alpha_t"] = model.alpha.alpha_t
    for k, v in (extra or {}).items():
        arrays[f"extra/{k}"] = np.asarray(v)
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(path):
    """Returns ``(model, config, extra)``."""
    with np.load(Path(path), allow_pickle=False) as z:
        meta = json.loads(str(z["__meta__"]))
        if meta.get("format_version") != CHECKPOINT_VERSION:
            raise DataError(f"unsupported checkpoint version {meta.get('format_version')}")
        arrays = {k: z[k] for k in z.files}
    config = config_from_dict(meta["config"])

    def group(prefix):
        return {k[len(prefix):]: v for k, v in arrays.items() if k.startswith(prefix)}

    adam = AdamState(m=group("adam_m/"), v=group("adam_v/"), **meta["adam"])
    model = ModelState(params=unflatten_params(group("param/"), config.gat), features=arrays["features"],
                       alpha=dl.AlphaPair(arrays["alpha_d"], arrays["alpha_t"]), adam=adam,
                       history=list(meta["history"]), log=[tuple(r) for r in meta["log"]])
    return model, config, group("extra/")
