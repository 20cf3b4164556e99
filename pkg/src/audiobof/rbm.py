"""Restricted Boltzmann machines trained with one-step contrastive
divergence.

Three unit combinations are supported: Gaussian-binary with a sparsity
penalty (the local feature learner), binary-ReLU (bottom of the
pretraining stack, visible units matching the [0,1] scale of the
bag-of-features), and ReLU-ReLU (upper pretraining layers). Gaussian
visible units assume unit variance, so inputs must be whitened first.

CD-1 follows the usual conventions: hidden states are sampled for the
reconstruction step, while both correlation terms use probabilities (or
deterministic rates for ReLU units). A tiny enumeration oracle provides
exact log-likelihoods for testing the update direction.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit as sigmoid
from scipy.special import logsumexp

from . import matio

VISIBLE_TYPES = ("gaussian", "binary", "relu")
HIDDEN_TYPES = ("binary", "relu")

INIT_WEIGHT_STD = 0.01
SPARSE_INIT_HIDDEN_BIAS = -4.0  # starts sigmoid units near the sparse regime


@dataclass
class RbmModel:
    W: np.ndarray  # (d_visible, d_hidden)
    b: np.ndarray  # visible bias
    c: np.ndarray  # hidden bias
    visible_type: str = "gaussian"
    hidden_type: str = "binary"

    def __post_init__(self):
        if self.visible_type not in VISIBLE_TYPES:
            raise ValueError(f"unknown visible type {self.visible_type!r}")
        if self.hidden_type not in HIDDEN_TYPES:
            raise ValueError(f"unknown hidden type {self.hidden_type!r}")
        if self.W.shape != (self.b.shape[0], self.c.shape[0]):
            raise ValueError("inconsistent parameter shapes")

    @property
    def d_visible(self):
        return self.W.shape[0]

    @property
    def d_hidden(self):
        return self.W.shape[1]


@dataclass
class RbmTrainConfig:
    n_hidden: int = 1024
    visible_type: str = "gaussian"
    hidden_type: str = "binary"
    learning_rate: float = 0.03
    weight_cost: float = 0.001
    target_sparsity: float = 0.02
    sparsity_strength: float = 3.0  # 0 disables the sparsity penalty
    minibatch_size: int = 100
    epochs: int = 30
    momentum_initial: float = 0.5
    momentum_final: float = 0.9
    momentum_switch_epoch: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.weight_cost < 0 or self.sparsity_strength < 0:
            raise ValueError("penalties must be nonnegative")
        if self.sparsity_strength > 0 and not 0 < self.target_sparsity < 1:
            raise ValueError("target_sparsity must be in (0, 1)")


def hidden_preactivation(model: RbmModel, v):
    return model.c + np.asarray(v) @ model.W


def hidden_given_visible(model: RbmModel, v):
    """Hidden activation probabilities (binary) or rates (ReLU)."""
    pre = hidden_preactivation(model, v)
    if model.hidden_type == "binary":
        return sigmoid(pre)
    return np.maximum(pre, 0.0)


def visible_given_hidden(model: RbmModel, h):
    """Mean of the visible reconstruction distribution given hidden values."""
    pre = model.b + np.asarray(h) @ model.W.T
    if model.visible_type == "gaussian":
        return pre
    if model.visible_type == "binary":
        return sigmoid(pre)
    return np.maximum(pre, 0.0)


def noisy_relu_sample(pre_activation, rng):
    """Sample max(0, x + N(0, sigmoid(x))) used for ReLU Gibbs steps."""
    pre = np.asarray(pre_activation, dtype=np.float64)
    noise = rng.standard_normal(pre.shape) * np.sqrt(sigmoid(pre))
    return np.maximum(pre + noise, 0.0)


def _sample_hidden(model, pre, probs, rng):
    if model.hidden_type == "binary":
        return (rng.random(probs.shape) < probs).astype(np.float64)
    return noisy_relu_sample(pre, rng)


def _cd1(model, V0, rng):
    """One CD-1 step; returns gradients, data-phase hidden activity, and
    the reconstruction."""
    pre0 = hidden_preactivation(model, V0)
    H0 = sigmoid(pre0) if model.hidden_type == "binary" else np.maximum(pre0, 0.0)
    H0_sample = _sample_hidden(model, pre0, H0, rng)

    V1 = visible_given_hidden(model, H0_sample)
    H1 = hidden_given_visible(model, V1)

    m = V0.shape[0]
    dW = (V0.T @ H0 - V1.T @ H1) / m
    db = (V0 - V1).mean(axis=0)
    dc = (H0 - H1).mean(axis=0)
    return dW, db, dc, H0, V1


def cd1_gradients(model: RbmModel, minibatch, rng):
    """CD-1 gradient estimates (dW, db, dc) before any penalty terms."""
    V0 = np.asarray(minibatch, dtype=np.float64)
    dW, db, dc, _, _ = _cd1(model, V0, rng)
    return dW, db, dc


def sparsity_bias_update(hidden_probs, target_sparsity, strength):
    """Per-unit hidden-bias shift strength*(rho - mean activation)."""
    mean_act = np.asarray(hidden_probs).mean(axis=0)
    return strength * (target_sparsity - mean_act)


def init_model(d_visible, config: RbmTrainConfig, rng) -> RbmModel:
    c0 = SPARSE_INIT_HIDDEN_BIAS if (config.sparsity_strength > 0 and config.hidden_type == "binary") else 0.0
    return RbmModel(
        W=rng.normal(0.0, INIT_WEIGHT_STD, size=(d_visible, config.n_hidden)),
        b=np.zeros(d_visible),
        c=np.full(config.n_hidden, c0, dtype=np.float64),
        visible_type=config.visible_type,
        hidden_type=config.hidden_type,
    )


def train_rbm(X, config: RbmTrainConfig):
    """Minibatch CD-1 with momentum, L2 weight decay on W, and the optional
    sparsity bias shift.

    Returns (model, errors) where errors holds one mean squared
    reconstruction error per epoch. Raises if parameters go non-finite.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("training data must be a matrix")
    if X.shape[0] < config.minibatch_size:
        raise ValueError("fewer rows than minibatch_size")

    rng = np.random.default_rng(config.seed)
    model = init_model(X.shape[1], config, rng)
    vel_W = np.zeros_like(model.W)
    vel_b = np.zeros_like(model.b)
    vel_c = np.zeros_like(model.c)

    errors = []
    for epoch in range(config.epochs):
        momentum = config.momentum_initial if epoch < config.momentum_switch_epoch else config.momentum_final
        order = rng.permutation(X.shape[0])
        sq_err = 0.0
        for lo in range(0, X.shape[0], config.minibatch_size):
            V0 = X[order[lo : lo + config.minibatch_size]]
            dW, db, dc, H0, V1 = _cd1(model, V0, rng)

            vel_W = momentum * vel_W + config.learning_rate * (dW - config.weight_cost * model.W)
            vel_b = momentum * vel_b + config.learning_rate * db
            vel_c = momentum * vel_c + config.learning_rate * dc
            model.W += vel_W
            model.b += vel_b
            model.c += vel_c
            if config.sparsity_strength > 0:
                model.c += sparsity_bias_update(H0, config.target_sparsity, config.sparsity_strength)

            sq_err += float(((V0 - V1) ** 2).sum())

        if not (np.all(np.isfinite(model.W)) and np.all(np.isfinite(model.b)) and np.all(np.isfinite(model.c))):
            raise RuntimeError(f"training diverged at epoch {epoch}")
        errors.append(sq_err / X.size)
    return model, errors


# ---------------------------------------------------------------------------
# Exact enumeration oracle (tiny binary-binary models only)

ORACLE_MAX_UNITS = 20


def _check_oracle_feasible(model):
    if model.visible_type != "binary" or model.hidden_type != "binary":
        raise ValueError("oracle infeasible: binary-binary models only")
    if model.d_visible + model.d_hidden > ORACLE_MAX_UNITS:
        raise ValueError("oracle infeasible: model too large")


def _all_binary_vectors(d):
    return ((np.arange(2**d)[:, None] >> np.arange(d)) & 1).astype(np.float64)


def exact_log_partition(model: RbmModel):
    """log Z with hidden units summed out analytically per visible config."""
    _check_oracle_feasible(model)
    V = _all_binary_vectors(model.d_visible)
    return float(logsumexp(V @ model.b + np.logaddexp(0.0, model.c + V @ model.W).sum(axis=1)))


def exact_visible_distribution(model: RbmModel):
    """p(v) over all 2^d_visible configurations, in bit-count order."""
    _check_oracle_feasible(model)
    V = _all_binary_vectors(model.d_visible)
    log_unnorm = V @ model.b + np.logaddexp(0.0, model.c + V @ model.W).sum(axis=1)
    return np.exp(log_unnorm - logsumexp(log_unnorm))


def exact_log_likelihood(model: RbmModel, X):
    """Mean log p(v) of the rows of X."""
    _check_oracle_feasible(model)
    X = np.asarray(X, dtype=np.float64)
    log_unnorm = X @ model.b + np.logaddexp(0.0, model.c + X @ model.W).sum(axis=1)
    return float(log_unnorm.mean() - exact_log_partition(model))


def exact_gradients(model: RbmModel, X):
    """Exact gradient of the mean log-likelihood w.r.t. (W, b, c)."""
    _check_oracle_feasible(model)
    X = np.asarray(X, dtype=np.float64)
    V = _all_binary_vectors(model.d_visible)
    p_v = exact_visible_distribution(model)

    H_data = sigmoid(model.c + X @ model.W)
    H_all = sigmoid(model.c + V @ model.W)

    dW = X.T @ H_data / X.shape[0] - (V * p_v[:, None]).T @ H_all
    db = X.mean(axis=0) - p_v @ V
    dc = H_data.mean(axis=0) - p_v @ H_all
    return dW, db, dc


# ---------------------------------------------------------------------------
# Persistence

def save_rbm(model: RbmModel, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    header = (
        f"visible_type {model.visible_type}\n"
        f"hidden_type {model.hidden_type}\n"
        f"d_visible {model.d_visible}\n"
        f"d_hidden {model.d_hidden}\n"
    )
    (out_dir / "header.txt").write_text(header)
    matio.save_matrix(out_dir / "W.dbof", model.W)
    matio.save_matrix(out_dir / "b.dbof", model.b)
    matio.save_matrix(out_dir / "c.dbof", model.c)


def load_rbm(out_dir) -> RbmModel:
    out_dir = Path(out_dir)
    fields = dict(line.split(None, 1) for line in (out_dir / "header.txt").read_text().splitlines())
    return RbmModel(
        W=matio.load_matrix(out_dir / "W.dbof").astype(np.float64),
        b=matio.load_vector(out_dir / "b.dbof").astype(np.float64),
        c=matio.load_vector(out_dir / "c.dbof").astype(np.float64),
        visible_type=fields["visible_type"],
        hidden_type=fields["hidden_type"],
    )
