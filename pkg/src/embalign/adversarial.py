"""Adversarial domain adaptation between projected text and image features.

A two-layer SELU discriminator D is trained to output 1 on projected text
vectors W.T x and 0 on image vectors y; the projection W is trained to fool
it. Losses:

    d_loss = mean[-log D(W.T x)] + mean[-log(1 - D(y))]
    g_loss = mean[-log(1 - D(W.T x))]         (gradient flows to W only)

with probabilities clamped to [1e-7, 1 - 1e-7] before the logs. The
semi-supervised trainer adds the supervised alignment gradient to every W
update, weighted per sample, alongside lambda times the adversarial one.

Randomness consumption order (relied on by determinism tests): projection
init, discriminator init, then one batch permutation per epoch.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .alignment import (ea_grad, ea_loss, init_projection, moment_match_init,
                        ortho_grad, ProjectionModel)
from .corpus import PairSet
from .errors import NumericalError
from .linalg import check_matrix, make_rng

# Self-normalizing SELU constants.
SELU_LAMBDA = 1.0507009873554804934193349852946
SELU_ALPHA = 1.6732632423543772848170429916717

PROB_CLAMP = 1e-7
HIDDEN_SIZE = 256


def selu(x):
    """lambda*x for x > 0, lambda*alpha*(exp(x) - 1) for x <= 0."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > 0.0, SELU_LAMBDA * x,
                    SELU_LAMBDA * SELU_ALPHA * np.expm1(np.minimum(x, 0.0)))


def selu_deriv(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > 0.0, SELU_LAMBDA,
                    SELU_LAMBDA * SELU_ALPHA * np.exp(np.minimum(x, 0.0)))


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class Discriminator:
    """2-layer MLP with SELU hidden activation and sigmoid output."""

    w1: np.ndarray   # (in_dim, hidden)
    b1: np.ndarray   # (hidden,)
    w2: np.ndarray   # (hidden,)
    b2: float

    @property
    def in_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden(self) -> int:
        return self.w1.shape[1]

    def copy(self) -> "Discriminator":
        return Discriminator(self.w1.copy(), self.b1.copy(), self.w2.copy(), float(self.b2))


def init_discriminator(in_dim: int, rng: np.random.Generator,
                       hidden: int = HIDDEN_SIZE) -> Discriminator:
    """LeCun-style fan-in scaled uniform init (variance 1/fan_in)."""
    lim1 = np.sqrt(3.0 / in_dim)
    lim2 = np.sqrt(3.0 / hidden)
    return Discriminator(
        w1=rng.uniform(-lim1, lim1, size=(in_dim, hidden)),
        b1=np.zeros(hidden),
        w2=rng.uniform(-lim2, lim2, size=hidden),
        b2=0.0,
    )


def _forward(disc: Discriminator, v: np.ndarray):
    """Batch forward pass; v is (m, in_dim). Returns (p, cache)."""
    pre1 = v @ disc.w1 + disc.b1
    h = selu(pre1)
    logit = h @ disc.w2 + disc.b2
    p = sigmoid(logit)
    return p, (v, pre1, h)


def disc_forward(disc: Discriminator, v) -> float:
    """Probability the discriminator assigns to one vector being projected text."""
    v = np.asarray(v, dtype=np.float64).reshape(1, -1)
    if not np.all(np.isfinite(v)):
        raise ValueError("discriminator input contains NaN or Inf")
    p, _ = _forward(disc, v)
    return float(p[0])


def _clamp(p):
    return np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)


def _clamp_active(p):
    return (p < PROB_CLAMP) | (p > 1.0 - PROB_CLAMP)


def d_loss(disc: Discriminator, w, x_batch, y_batch) -> float:
    """Discriminator objective on column-sample batches; lower is better for D."""
    x_batch = check_matrix(x_batch, "X batch")
    y_batch = check_matrix(y_batch, "Y batch")
    if x_batch.shape[1] == 0 or y_batch.shape[1] == 0:
        raise ValueError("adversarial batches must be non-empty")
    px, _ = _forward(disc, (w.T @ x_batch).T)
    py, _ = _forward(disc, y_batch.T)
    return float(np.mean(-np.log(_clamp(px))) + np.mean(-np.log(1.0 - _clamp(py))))


def g_loss(disc: Discriminator, w, x_batch) -> float:
    """Generator objective: make projected text look like images to D."""
    x_batch = check_matrix(x_batch, "X batch")
    if x_batch.shape[1] == 0:
        raise ValueError("adversarial batches must be non-empty")
    px, _ = _forward(disc, (w.T @ x_batch).T)
    return float(np.mean(-np.log(1.0 - _clamp(px))))


def _backprop_to_params(disc: Discriminator, cache, dlogit):
    """Gradients of a scalar loss wrt discriminator parameters."""
    v, pre1, h = cache
    dw2 = h.T @ dlogit
    db2 = float(np.sum(dlogit))
    dh = np.outer(dlogit, disc.w2)
    dpre1 = dh * selu_deriv(pre1)
    dw1 = v.T @ dpre1
    db1 = dpre1.sum(axis=0)
    return dw1, db1, dw2, db2


def _backprop_to_input(disc: Discriminator, cache, dlogit):
    """Gradient of a scalar loss wrt the discriminator input rows."""
    _, pre1, _ = cache
    dpre1 = np.outer(dlogit, disc.w2) * selu_deriv(pre1)
    return dpre1 @ disc.w1.T


def d_loss_grads(disc: Discriminator, w, x_batch, y_batch, smoothing: float = 0.0):
    """d_loss and its gradients wrt all discriminator parameters.

    With label smoothing s, targets become 1-s for projected text and s for
    images. Clamped probabilities contribute zero gradient.
    """
    zx = (w.T @ x_batch).T
    zy = y_batch.T
    px, cx = _forward(disc, zx)
    py, cy = _forward(disc, zy)
    mx, my = zx.shape[0], zy.shape[0]
    s = float(smoothing)
    # -[(1-s) log p + s log(1-p)] has dl/dlogit = p - (1-s); symmetric for images.
    dlx = np.where(_clamp_active(px), 0.0, px - (1.0 - s)) / mx
    dly = np.where(_clamp_active(py), 0.0, py - s) / my
    gx = _backprop_to_params(disc, cx, dlx)
    gy = _backprop_to_params(disc, cy, dly)
    pxc, pyc = _clamp(px), _clamp(py)
    loss = float(np.mean(-(1.0 - s) * np.log(pxc) - s * np.log(1.0 - pxc))
                 + np.mean(-s * np.log(pyc) - (1.0 - s) * np.log(1.0 - pyc)))
    grads = tuple(a + b for a, b in zip(gx, gy))
    return loss, grads


def g_loss_grad_w(disc: Discriminator, w, x_batch):
    """g_loss and its gradient wrt W (discriminator frozen)."""
    zx = (w.T @ x_batch).T
    px, cx = _forward(disc, zx)
    m = zx.shape[0]
    dlogit = np.where(_clamp_active(px), 0.0, px) / m
    dz = _backprop_to_input(disc, cx, dlogit)
    loss = float(np.mean(-np.log(1.0 - _clamp(px))))
    return loss, x_batch @ dz


@dataclass
class GanConfig:
    d_steps_per_g_step: int = 1
    learning_rate_d: float = 0.1
    learning_rate_g: float = 0.1
    epochs: int = 40
    batch_size: int = 250
    lam: float = 0.1              # weight of the adversarial term in the semi objective
    smoothing: float = 0.0
    beta: float = 0.01            # orthogonality penalty on W updates
    ortho_enabled: bool = True
    lr_decay: float = 0.98        # per-epoch multiplicative decay for both rates

    def validate(self):
        if self.d_steps_per_g_step < 1:
            raise ValueError("d_steps_per_g_step must be >= 1")
        if self.learning_rate_d <= 0 or self.learning_rate_g <= 0:
            raise ValueError("learning rates must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.smoothing < 0:
            raise ValueError("smoothing must be >= 0")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if not 0 < self.lr_decay <= 1:
            raise ValueError("lr_decay must be in (0, 1]")


@dataclass
class EpochRecord:
    epoch: int
    d_loss: float
    g_loss: float
    ea_loss: float
    val_metric: float


@dataclass
class TrainTrace:
    records: list = field(default_factory=list)

    def append(self, rec: EpochRecord):
        for v in (rec.d_loss, rec.g_loss, rec.ea_loss, rec.val_metric):
            if not np.isfinite(v):
                raise NumericalError("non-finite value in training trace", trace=self)
        self.records.append(rec)

    def __len__(self):
        return len(self.records)


def gan_init_projection(x, y, rng: np.random.Generator) -> np.ndarray:
    """Projection init for the adversarial trainers.

    Uses the unsupervised moment-matching init when the two spaces share a
    dimension (random init provably cannot reach alignment on symmetric
    high-dimensional data); falls back to the scaled-uniform init otherwise.
    The rng is consumed either way so downstream draws stay aligned.
    """
    w_uniform = init_projection(x.shape[0], y.shape[0], rng)
    if x.shape[0] == y.shape[0]:
        return moment_match_init(x, y)
    return w_uniform


def _mean_pair_cosine(w, xs, ys) -> float:
    """Mean cosine between projected supervised text columns and their images."""
    px = w.T @ xs
    num = np.sum(px * ys, axis=0)
    den = np.linalg.norm(px, axis=0) * np.linalg.norm(ys, axis=0)
    den = np.where(den > 0.0, den, 1.0)
    return float(np.mean(num / den))


def _dictionary_cosine(w, x, y, size: int = 500) -> float:
    from .alignment import induce_dictionary
    pairs = induce_dictionary(w, x, y, size)
    if not pairs.scores:
        return 0.0
    return float(np.mean(pairs.scores))


def _train_gan(x, y, sup: tuple | None, config: GanConfig, seed: int,
               method_tag: str) -> tuple[ProjectionModel, TrainTrace]:
    """Shared alternating trainer for the adversarial and semi-supervised paths.

    sup is (x_sup, y_sup) column-aligned supervised matrices or None. Every W
    update applies the per-sample-mean supervised alignment gradient (when
    present) plus lam times the adversarial generator gradient, plus the
    orthogonality penalty gradient when enabled.
    """
    x = check_matrix(x, "X")
    y = check_matrix(y, "Y")
    config.validate()
    rng = make_rng(seed)
    w = gan_init_projection(x, y, rng)
    disc = init_discriminator(y.shape[0], rng)
    trace = TrainTrace()
    n_x, n_y = x.shape[1], y.shape[1]
    lr_d, lr_g = config.learning_rate_d, config.learning_rate_g
    beta = config.beta if config.ortho_enabled else 0.0
    for epoch in range(config.epochs):
        perm_x = rng.permutation(n_x)
        perm_y = rng.permutation(n_y)
        d_losses, g_losses = [], []
        n_batches = max(1, int(np.ceil(min(n_x, n_y) / config.batch_size)))
        for b in range(n_batches):
            bx = perm_x[b * config.batch_size:(b + 1) * config.batch_size]
            by = perm_y[b * config.batch_size:(b + 1) * config.batch_size]
            if bx.size == 0 or by.size == 0:
                continue
            xb, yb = x[:, bx], y[:, by]
            for _ in range(config.d_steps_per_g_step):
                dl, (dw1, db1, dw2, db2) = d_loss_grads(disc, w, xb, yb, config.smoothing)
                disc.w1 -= lr_d * dw1
                disc.b1 -= lr_d * db1
                disc.w2 -= lr_d * dw2
                disc.b2 -= lr_d * db2
            gl, gw = g_loss_grad_w(disc, w, xb)
            d_losses.append(dl)
            g_losses.append(gl)
            if sup is not None:
                # semi objective: supervised term plus lam-weighted adversarial term
                xs, ys = sup
                step = ea_grad(w, xs, ys) / xs.shape[1]
                if config.lam != 0.0:
                    step = step + config.lam * gw
            else:
                step = gw.copy()
            if beta:
                step = step + ortho_grad(w, beta)
            w = w - lr_g * step
            if not np.all(np.isfinite(w)):
                raise NumericalError(
                    f"adversarial training produced non-finite W at epoch {epoch}",
                    trace=trace)
        if not np.all(np.isfinite(disc.w1)):
            raise NumericalError(
                f"adversarial training produced non-finite discriminator weights "
                f"at epoch {epoch}", trace=trace)
        mean_d = float(np.mean(d_losses)) if d_losses else 0.0
        mean_g = float(np.mean(g_losses)) if g_losses else 0.0
        if sup is not None:
            ea = ea_loss(w, sup[0], sup[1])
            val = _mean_pair_cosine(w, sup[0], sup[1])
        else:
            ea = 0.0
            val = _dictionary_cosine(w, x, y)
        if not all(np.isfinite(v) for v in (mean_d, mean_g, ea, val)):
            raise NumericalError(
                f"non-finite loss at epoch {epoch}: d={mean_d} g={mean_g} ea={ea}",
                trace=trace)
        trace.append(EpochRecord(epoch=epoch, d_loss=mean_d, g_loss=mean_g,
                                 ea_loss=ea, val_metric=val))
        lr_d *= config.lr_decay
        lr_g *= config.lr_decay
    model = ProjectionModel(W=w, method_tag=method_tag, seed=int(seed),
                            extras={"discriminator": disc})
    return model, trace


def train_adversarial(x, y, config: GanConfig, seed: int = 0):
    """Unsupervised adversarial alignment; no pairing information is used."""
    return _train_gan(x, y, None, config, seed, method_tag="adv")


def train_semi_supervised(x, y, pairs: PairSet, config: GanConfig, seed: int = 0,
                          text_ids=None, image_ids=None):
    """Combined objective: supervised alignment on the given pairs plus
    lam-weighted adversarial alignment on all samples.

    pairs reference column indices of x/y directly unless id lists are given.
    An empty pair set degenerates to train_adversarial (with a warning).
    """
    if len(pairs) == 0:
        warnings.warn("no supervised pairs given; training adversarially only")
        model, trace = _train_gan(x, y, None, config, seed, method_tag="semi")
        return model, trace
    x = check_matrix(x, "X")
    y = check_matrix(y, "Y")
    if text_ids is not None:
        tmap = {str(t): i for i, t in enumerate(text_ids)}
        imap = {str(t): i for i, t in enumerate(image_ids)}
        xi = np.array([tmap[a] for a, _ in pairs.pairs], dtype=np.int64)
        yi = np.array([imap[b] for _, b in pairs.pairs], dtype=np.int64)
    else:
        xi = np.array([int(a) for a, _ in pairs.pairs], dtype=np.int64)
        yi = np.array([int(b) for _, b in pairs.pairs], dtype=np.int64)
    sup = (x[:, xi], y[:, yi])
    return _train_gan(x, y, sup, config, seed, method_tag="semi")
