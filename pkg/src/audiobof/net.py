"""Song-level tag prediction network.

A stack of ReLU layers over the bag-of-features with a logistic output
head, one unit per tag. Hidden layers can be initialized from greedily
pretrained RBMs (binary-ReLU at the bottom, ReLU-ReLU above) or at
random; fine-tuning minimizes multi-label cross-entropy with
backpropagation, AdaDelta steps, and inverted dropout.
"""

import copy
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit as sigmoid

from . import matio
from .evaluate import auc_tag
from .rbm import RbmTrainConfig, train_rbm

PROB_CLAMP = 1e-12
OUT_INIT_STD = 0.01


@dataclass
class DeepNet:
    hidden_W: list  # each (d_in, d_out)
    hidden_b: list
    out_W: np.ndarray  # (d_last, n_tags)
    out_b: np.ndarray

    @property
    def layer_sizes(self):
        sizes = [self.hidden_W[0].shape[0]] if self.hidden_W else [self.out_W.shape[0]]
        sizes += [W.shape[1] for W in self.hidden_W]
        return sizes

    @property
    def n_tags(self):
        return self.out_W.shape[1]

    def parameters(self):
        """Flat parameter list: [W1, b1, ..., out_W, out_b]."""
        params = []
        for W, b in zip(self.hidden_W, self.hidden_b):
            params += [W, b]
        params += [self.out_W, self.out_b]
        return params


@dataclass
class FinetuneConfig:
    dropout_input: float = 0.2
    dropout_hidden: float = 0.5
    adadelta_decay: float = 0.95
    adadelta_epsilon: float = 1e-6
    minibatch_size: int = 100
    epochs: int = 200
    patience: int = 10
    seed: int = 0

    def __post_init__(self):
        if not (0 <= self.dropout_input < 1 and 0 <= self.dropout_hidden < 1):
            raise ValueError("dropout probabilities must be in [0, 1)")


def pretrain_stack(bof_table, layer_sizes, weight_costs, seed, learning_rate=0.003,
                   epochs=30, minibatch_size=100):
    """Greedy layer-wise RBM pretraining on the bag-of-features table.

    The bottom RBM uses binary visible units (BoF values live in [0,1])
    and ReLU hidden units; upper RBMs are ReLU-ReLU and train on the
    previous layer's deterministic rates. No sparsity penalty is used.
    """
    layer_sizes = list(layer_sizes)
    weight_costs = list(weight_costs)
    if len(weight_costs) != len(layer_sizes):
        raise ValueError(f"need one weight cost per layer: {len(weight_costs)} != {len(layer_sizes)}")

    data = np.asarray(bof_table, dtype=np.float64)
    stack = []
    for i, (size, cost) in enumerate(zip(layer_sizes, weight_costs)):
        config = RbmTrainConfig(
            n_hidden=size,
            visible_type="binary" if i == 0 else "relu",
            hidden_type="relu",
            learning_rate=learning_rate,
            weight_cost=cost,
            sparsity_strength=0.0,
            minibatch_size=min(minibatch_size, data.shape[0]),
            epochs=epochs,
            seed=(seed, i),
        )
        model, _ = train_rbm(data, config)
        stack.append(model)
        data = np.maximum(model.c + data @ model.W, 0.0)
    return stack


def init_from_stack(stack, n_tags, seed) -> DeepNet:
    """Copy pretrained RBM weights and hidden biases into a network."""
    if not stack:
        raise ValueError("empty pretraining stack")
    rng = np.random.default_rng(seed)
    hidden_W = [m.W.copy() for m in stack]
    hidden_b = [m.c.copy() for m in stack]
    return DeepNet(
        hidden_W=hidden_W,
        hidden_b=hidden_b,
        out_W=rng.normal(0.0, OUT_INIT_STD, size=(hidden_W[-1].shape[1], n_tags)),
        out_b=np.zeros(n_tags),
    )


def init_random(input_dim, layer_sizes, n_tags, seed) -> DeepNet:
    """Random baseline: all weights N(0, 0.01^2), biases zero."""
    rng = np.random.default_rng(seed)
    dims = [input_dim] + list(layer_sizes)
    hidden_W = [rng.normal(0.0, OUT_INIT_STD, size=(dims[i], dims[i + 1])) for i in range(len(layer_sizes))]
    hidden_b = [np.zeros(d) for d in dims[1:]]
    return DeepNet(
        hidden_W=hidden_W,
        hidden_b=hidden_b,
        out_W=rng.normal(0.0, OUT_INIT_STD, size=(dims[-1], n_tags)),
        out_b=np.zeros(n_tags),
    )


def make_dropout_masks(net: DeepNet, batch_size, p_input, p_hidden, rng):
    """Inverted-dropout masks (entries 0 or 1/(1-p)) for the input and each
    hidden layer's output; scaling happens at training time so inference
    needs none."""
    shapes = [(batch_size, net.layer_sizes[0])] + [(batch_size, W.shape[1]) for W in net.hidden_W]
    probs = [p_input] + [p_hidden] * len(net.hidden_W)
    masks = []
    for shape, p in zip(shapes, probs):
        if p == 0:
            masks.append(np.ones(shape))
        else:
            masks.append((rng.random(shape) >= p) / (1.0 - p))
    return masks


def _forward_cached(net, X, masks):
    a = X if masks is None else X * masks[0]
    inputs, preacts = [], []
    for i, (W, b) in enumerate(zip(net.hidden_W, net.hidden_b)):
        inputs.append(a)
        z = a @ W + b
        preacts.append(z)
        a = np.maximum(z, 0.0)
        if masks is not None:
            a = a * masks[i + 1]
    scores = sigmoid(a @ net.out_W + net.out_b)
    return scores, (inputs, preacts, a)


def forward(net: DeepNet, x, masks=None):
    """Tag scores in (0, 1); `masks` (training only) applies dropout."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    scores, _ = _forward_cached(net, np.atleast_2d(x), masks)
    return scores[0] if squeeze else scores


def cross_entropy_loss(predictions, labels):
    """Summed binary cross-entropy over all (clip, tag) cells."""
    h = np.clip(np.asarray(predictions, dtype=np.float64), PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = np.asarray(labels, dtype=np.float64)
    return float(-(y * np.log(h) + (1.0 - y) * np.log(1.0 - h)).sum())


def loss_gradients(net: DeepNet, X, Y, masks=None):
    """Loss and its gradients in the same order as net.parameters()."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    scores, (inputs, preacts, a_last) = _forward_cached(net, X, masks)
    loss = cross_entropy_loss(scores, Y)

    delta = scores - Y
    grad_out_W = a_last.T @ delta
    grad_out_b = delta.sum(axis=0)
    grads_hidden = []
    da = delta @ net.out_W.T
    for i in range(len(net.hidden_W) - 1, -1, -1):
        if masks is not None:
            da = da * masks[i + 1]
        dz = da * (preacts[i] > 0)
        grads_hidden.append((inputs[i].T @ dz, dz.sum(axis=0)))
        da = dz @ net.hidden_W[i].T

    grads = []
    for dW, db in reversed(grads_hidden):
        grads += [dW, db]
    grads += [grad_out_W, grad_out_b]
    return loss, grads


class AdaDelta:
    """Per-parameter adaptive steps with no global learning rate."""

    def __init__(self, decay=0.95, epsilon=1e-6):
        self.decay = decay
        self.epsilon = epsilon
        self.sq_grad = None
        self.sq_delta = None

    def step(self, params, grads):
        """Update params in place; returns the applied deltas."""
        if self.sq_grad is None:
            self.sq_grad = [np.zeros_like(p) for p in params]
            self.sq_delta = [np.zeros_like(p) for p in params]
        deltas = []
        for p, g, eg, ed in zip(params, grads, self.sq_grad, self.sq_delta):
            eg *= self.decay
            eg += (1.0 - self.decay) * g * g
            delta = -np.sqrt(ed + self.epsilon) / np.sqrt(eg + self.epsilon) * g
            ed *= self.decay
            ed += (1.0 - self.decay) * delta * delta
            p += delta
            deltas.append(delta)
        return deltas


def finetune(net: DeepNet, X_train, Y_train, X_val, Y_val, config: FinetuneConfig):
    """Minibatch backprop with dropout and AdaDelta, early-stopped on
    validation AUC averaged over tags.

    Returns (best_net, history); `best_net` is the snapshot with the best
    validation AUC. History rows are (epoch, train_loss, val_auc).
    """
    X_train = np.asarray(X_train, dtype=np.float64)
    Y_train = np.asarray(Y_train, dtype=np.float64)
    rng = np.random.default_rng(config.seed)
    net = copy.deepcopy(net)
    opt = AdaDelta(config.adadelta_decay, config.adadelta_epsilon)

    best_auc = -np.inf
    best_net = copy.deepcopy(net)
    bad_epochs = 0
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(X_train.shape[0])
        epoch_loss = 0.0
        for lo in range(0, X_train.shape[0], config.minibatch_size):
            idx = order[lo : lo + config.minibatch_size]
            masks = None
            if config.dropout_input > 0 or config.dropout_hidden > 0:
                masks = make_dropout_masks(net, len(idx), config.dropout_input, config.dropout_hidden, rng)
            loss, grads = loss_gradients(net, X_train[idx], Y_train[idx], masks)
            if not np.isfinite(loss):
                raise RuntimeError(f"training diverged at epoch {epoch}")
            opt.step(net.parameters(), grads)
            epoch_loss += loss

        val_auc, _ = auc_tag(forward(net, X_val), Y_val)
        history.append({"epoch": epoch, "train_loss": epoch_loss, "val_auc": val_auc})
        if val_auc > best_auc:
            best_auc = val_auc
            best_net = copy.deepcopy(net)
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs > config.patience:
                break
    return best_net, history


def save_net(net: DeepNet, out_dir):
    from pathlib import Path

    from . import matio

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sizes = " ".join(str(s) for s in net.layer_sizes)
    (out_dir / "header.txt").write_text(f"layer_sizes {sizes}\nn_tags {net.n_tags}\n")
    for i, (W, b) in enumerate(zip(net.hidden_W, net.hidden_b)):
        matio.save_matrix(out_dir / f"hidden{i}_W.dbof", W)
        matio.save_matrix(out_dir / f"hidden{i}_b.dbof", b)
    matio.save_matrix(out_dir / "out_W.dbof", net.out_W)
    matio.save_matrix(out_dir / "out_b.dbof", net.out_b)


def load_net(out_dir) -> DeepNet:
    from pathlib import Path

    from . import matio

    out_dir = Path(out_dir)
    fields = dict(line.split(None, 1) for line in (out_dir / "header.txt").read_text().splitlines())
    n_hidden_layers = len(fields["layer_sizes"].split()) - 1
    return DeepNet(
        hidden_W=[matio.load_matrix(out_dir / f"hidden{i}_W.dbof").astype(np.float64) for i in range(n_hidden_layers)],
        hidden_b=[matio.load_vector(out_dir / f"hidden{i}_b.dbof").astype(np.float64) for i in range(n_hidden_layers)],
        out_W=matio.load_matrix(out_dir / "out_W.dbof").astype(np.float64),
        out_b=matio.load_vector(out_dir / "out_b.dbof").astype(np.float64),
    )
