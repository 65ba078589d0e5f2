"""Supervised linear alignment between two embedding spaces.

Conventions follow the solvers' math: X is (d_x, n) and Y is (d_y, n) with
one sample per column, and the projection W is (d_x, d_y) applied as W.T @ X.
Provides the closed-form and gradient minimizers of the squared-Frobenius
alignment loss, the off-diagonal orthogonality penalty, the orthogonal
Procrustes solver, and mutual-nearest-neighbor dictionary induction with
Procrustes refinement.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .corpus import PairSet
from .errors import NumericalError
from .linalg import check_matrix, make_rng, solve_least_squares, svd

METHOD_TAGS = ("ea-closed", "ea-grad", "adv", "adv-proc", "semi")


@dataclass
class AlignConfig:
    beta: float = 0.01            # orthogonality penalty weight
    learning_rate: float = 0.1
    epochs: int = 100
    batch_size: int = 128
    ortho_enabled: bool = False
    refinement_rounds: int = 5
    dictionary_size: int = 500

    def validate(self):
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.refinement_rounds < 0:
            raise ValueError(f"refinement_rounds must be >= 0, got {self.refinement_rounds}")
        if self.dictionary_size < 1:
            raise ValueError(f"dictionary_size must be >= 1, got {self.dictionary_size}")


@dataclass
class ProjectionModel:
    """Learned projection W with how-it-was-trained metadata."""

    W: np.ndarray                 # (d_x, d_y)
    method_tag: str
    train_config: AlignConfig | None = None
    seed: int = 0
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        self.W = check_matrix(self.W, "W")
        if self.method_tag not in METHOD_TAGS:
            raise ValueError(f"unknown method tag {self.method_tag!r}")


def _check_xy(x, y, equal_dims: bool = False):
    x = check_matrix(x, "X")
    y = check_matrix(y, "Y")
    if x.shape[1] != y.shape[1]:
        raise ValueError(f"column counts differ: X has {x.shape[1]}, Y has {y.shape[1]}")
    if x.shape[1] < 1:
        raise ValueError("need at least one sample column")
    if equal_dims and x.shape[0] != y.shape[0]:
        raise ValueError(f"row dimensions differ: X has {x.shape[0]}, Y has {y.shape[0]}")
    return x, y


def ea_loss(w, x, y) -> float:
    """Alignment loss ||W.T X - Y||_F^2."""
    r = w.T @ x - y
    return float(np.sum(r * r))


def ea_grad(w, x, y) -> np.ndarray:
    """Gradient of ea_loss with respect to W: 2 X (W.T X - Y).T."""
    return 2.0 * (x @ (w.T @ x - y).T)


def ortho_penalty(w, beta: float) -> float:
    """beta * sum of squared off-diagonal entries of W.T W."""
    g = w.T @ w
    off = g - np.diag(np.diag(g))
    return float(beta * np.sum(off * off))


def ortho_grad(w, beta: float) -> np.ndarray:
    """Gradient of ortho_penalty: 4 beta W (W.T W with zeroed diagonal)."""
    g = w.T @ w
    off = g - np.diag(np.diag(g))
    return 4.0 * beta * (w @ off)


def fit_ea_closed(x, y) -> ProjectionModel:
    """Exact minimizer of ||W.T X - Y||_F^2 via least squares on X.T W = Y.T."""
    x, y = _check_xy(x, y)
    w = solve_least_squares(x.T, y.T)
    return ProjectionModel(W=w, method_tag="ea-closed")


def init_projection(d_x: int, d_y: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform(-a, a) init with a = sqrt(6 / (d_x + d_y))."""
    a = np.sqrt(6.0 / (d_x + d_y))
    return rng.uniform(-a, a, size=(d_x, d_y))


def moment_match_init(x, y) -> np.ndarray:
    """Unsupervised projection init from second- and third-moment statistics.

    Aligns the eigenframes of the two uncentered second-moment matrices
    (eigenvalues sorted descending), scales each direction by the square root
    of the eigenvalue ratio, and resolves each eigenvector's sign ambiguity
    by matching the third moment of the data projected onto it. When the two
    point clouds are (a permutation of) an exact rotation of each other, the
    moment matrices are exactly congruent and this recovers the rotation up
    to directions with vanishing skewness. Requires equal dimensions.
    """
    x = check_matrix(x, "X")
    y = check_matrix(y, "Y")
    if x.shape[0] != y.shape[0]:
        raise ValueError(
            f"moment matching requires equal dimensions, got {x.shape[0]} and {y.shape[0]}")
    if x.shape[1] < 2 or y.shape[1] < 2:
        raise ValueError("moment matching needs at least 2 samples per side")
    mx = x @ x.T / x.shape[1]
    my = y @ y.T / y.shape[1]
    lx, px = np.linalg.eigh(mx)
    ly, py = np.linalg.eigh(my)
    # eigh returns ascending order; flip to descending for stable pairing
    lx, px = lx[::-1], px[:, ::-1]
    ly, py = ly[::-1], py[:, ::-1]
    ax = px.T @ x
    ay = py.T @ y
    sign = np.where(np.mean(ax**3, axis=1) * np.mean(ay**3, axis=1) >= 0.0, 1.0, -1.0)
    lx = np.maximum(lx, 0.0)
    ly = np.maximum(ly, 0.0)
    scale = np.sqrt(np.where(lx > 1e-12 * max(lx[0], 1e-30), ly / np.maximum(lx, 1e-30), 1.0))
    return px @ np.diag(sign * scale) @ py.T


def fit_ea_gradient(x, y, config: AlignConfig, seed: int = 0) -> ProjectionModel:
    """Seeded mini-batch SGD on the alignment loss plus optional ortho penalty.

    Batch gradients are scaled per sample so the default learning rate is
    batch-size independent. Raises NumericalError if the full loss exceeds
    1e6 times its initial value.
    """
    x, y = _check_xy(x, y)
    config.validate()
    rng = make_rng(seed)
    w = init_projection(x.shape[0], y.shape[0], rng)
    n = x.shape[1]
    beta = config.beta if config.ortho_enabled else 0.0
    losses = [ea_loss(w, x, y) + (ortho_penalty(w, beta) if beta else 0.0)]
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            cols = order[start:start + config.batch_size]
            g = ea_grad(w, x[:, cols], y[:, cols]) / len(cols)
            if beta:
                g = g + ortho_grad(w, beta)
            w = w - config.learning_rate * g
        loss = ea_loss(w, x, y) + (ortho_penalty(w, beta) if beta else 0.0)
        if not np.isfinite(loss) or loss > 1e6 * max(losses[0], 1e-30):
            raise NumericalError(
                f"EA gradient training diverged (loss {loss:.3g} from initial "
                f"{losses[0]:.3g}); learning_rate={config.learning_rate}")
        losses.append(loss)
    return ProjectionModel(W=w, method_tag="ea-grad", train_config=config,
                           seed=int(seed), extras={"losses": losses})


def solve_procrustes(x, y) -> np.ndarray:
    """Orthogonality-constrained alignment: W = U V.T from the SVD of X Y.T.

    W.T is then the orthogonal map minimizing ||W.T X - Y||_F, so W.T W = I.
    """
    x, y = _check_xy(x, y, equal_dims=True)
    m = x @ y.T
    u, s, v = svd(m)
    if s.size == 0 or s[0] <= 0.0:
        raise NumericalError("Procrustes system X Y.T has rank 0")
    return u @ v.T


def _cosine_matrix(a, b) -> np.ndarray:
    """Pairwise cosine between columns of a and columns of b."""
    na = np.linalg.norm(a, axis=0)
    nb = np.linalg.norm(b, axis=0)
    na = np.where(na > 0.0, na, 1.0)
    nb = np.where(nb > 0.0, nb, 1.0)
    return (a / na).T @ (b / nb)


def induce_dictionary(w, x, y, size: int,
                      text_ids=None, image_ids=None,
                      csls_k: int = 0) -> PairSet:
    """Mutual-nearest-neighbor pairs between columns of W.T X and Y.

    Pairs are ranked by cosine similarity (descending, ties to the lower
    column index) and truncated to ``size``. With ``csls_k`` > 0 the ranking
    criterion switches to cross-domain similarity local scaling, which
    subtracts each point's mean similarity to its k nearest cross-domain
    neighbors to counter hubness.
    """
    if size < 1:
        raise ValueError(f"dictionary size must be >= 1, got {size}")
    w = check_matrix(w, "W")
    x = check_matrix(x, "X")
    y = check_matrix(y, "Y")
    if x.shape[0] != w.shape[0] or y.shape[0] != w.shape[1]:
        raise ValueError(
            f"W is {w.shape} but X rows are {x.shape[0]} and Y rows are {y.shape[0]}")
    sim = _cosine_matrix(w.T @ x, y)
    crit = sim
    if csls_k > 0:
        k = min(csls_k, sim.shape[1]), min(csls_k, sim.shape[0])
        rx = np.mean(np.sort(sim, axis=1)[:, -k[0]:], axis=1)
        ry = np.mean(np.sort(sim, axis=0)[-k[1]:, :], axis=0)
        crit = 2.0 * sim - rx[:, None] - ry[None, :]
    best_for_x = np.argmax(crit, axis=1)     # argmax takes the lowest index on ties
    best_for_y = np.argmax(crit, axis=0)
    xs = np.arange(sim.shape[0])
    mutual = best_for_y[best_for_x[xs]] == xs
    xi = xs[mutual]
    yi = best_for_x[xi]
    scores = sim[xi, yi]
    order = np.lexsort((xi, -scores))[:size]
    xi, yi, scores = xi[order], yi[order], scores[order]
    tids = list(text_ids) if text_ids is not None else [str(i) for i in range(sim.shape[0])]
    iids = list(image_ids) if image_ids is not None else [str(j) for j in range(sim.shape[1])]
    return PairSet(pairs=tuple((tids[i], iids[j]) for i, j in zip(xi, yi)),
                   scores=tuple(float(s) for s in scores))


def _dictionary_indices(w, x, y, size):
    pairs = induce_dictionary(w, x, y, size)
    xi = np.array([int(a) for a, _ in pairs.pairs], dtype=np.int64)
    yi = np.array([int(b) for _, b in pairs.pairs], dtype=np.int64)
    sims = np.asarray(pairs.scores if pairs.scores else [], dtype=np.float64)
    return xi, yi, sims


def refine(w0, x, y, rounds: int, size: int) -> ProjectionModel:
    """Alternate dictionary induction and Procrustes re-solving.

    Keeps the candidate whose induced dictionary has the highest mean cosine
    similarity across all rounds (including the starting point). An empty
    dictionary at the first round returns the start unchanged with a warning
    note.
    """
    w0 = check_matrix(w0, "W0")
    x, y = _check_xy(x, y, equal_dims=True)
    extras = {"rounds": int(rounds), "dictionary_size": int(size)}
    if rounds == 0:
        return ProjectionModel(W=w0.copy(), method_tag="adv-proc",
                               extras={**extras, "chosen_round": 0,
                                       "round_mean_cosine": []})
    xi, yi, sims = _dictionary_indices(w0, x, y, size)
    if xi.size == 0:
        warnings.warn("refinement found no mutual neighbors at round 1; "
                      "returning the starting projection")
        return ProjectionModel(W=w0.copy(), method_tag="adv-proc",
                               extras={**extras, "chosen_round": 0,
                                       "round_mean_cosine": [],
                                       "warning": "empty dictionary at round 1"})
    best_w, best_sim, best_round = w0, float(sims.mean()), 0
    mean_cosines = [best_sim]
    w = w0
    for rnd in range(1, rounds + 1):
        w = solve_procrustes(x[:, xi], y[:, yi])
        xi, yi, sims = _dictionary_indices(w, x, y, size)
        if xi.size == 0:
            break
        mean_sim = float(sims.mean())
        mean_cosines.append(mean_sim)
        if mean_sim > best_sim:
            best_w, best_sim, best_round = w, mean_sim, rnd
    return ProjectionModel(W=best_w.copy(), method_tag="adv-proc",
                           extras={**extras, "chosen_round": best_round,
                                   "round_mean_cosine": mean_cosines})
