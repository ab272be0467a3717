"""Exact t-SNE for the category-signature overview.

Quadratic-cost implementation: the point count is the category count (tens,
not thousands), so no tree approximation is needed. Per-row Gaussian
bandwidths come from a binary search matching the conditional entropy to
log(perplexity); the embedding is optimized by gradient descent on
KL(P || Q) with the Student-t kernel, early exaggeration, and the usual
two-stage momentum schedule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ProjectionDiverged

EPS = 1e-12  # floor inside logs only; returned P is exact

EXAGGERATION_STOP = 250
MOMENTUM_SWITCH = 250


def default_perplexity(n: int) -> float:
    """min(30, floor((N-1)/3)), the widest standard value valid for N points."""
    return float(min(30, (n - 1) // 3))


@dataclass(frozen=True)
class TsneConfig:
    perplexity: float
    iterations: int = 1000
    early_exaggeration: float = 12.0
    learning_rate: float = 200.0
    momentum_start: float = 0.5
    momentum_final: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if self.perplexity <= 0:
            raise ValueError("perplexity must be > 0")
        if self.iterations < 250:
            raise ValueError("iterations must be >= 250")
        if self.early_exaggeration < 1:
            raise ValueError("early_exaggeration must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        for m in (self.momentum_start, self.momentum_final):
            if not 0 <= m < 1:
                raise ValueError("momentum values must lie in [0, 1)")


@dataclass(frozen=True)
class ProjectionResult:
    coords: np.ndarray  # (N, 2)
    kl_history: tuple[float, ...]
    seen_mask: np.ndarray  # (N,) bool

    def __post_init__(self):
        coords = np.array(self.coords, dtype=np.float64)
        mask = np.array(self.seen_mask, dtype=bool)
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise ValueError("coords must be an (N, 2) matrix")
        if mask.shape != (coords.shape[0],):
            raise ValueError("seen_mask must have one entry per point")
        if not np.isfinite(coords).all():
            raise ValueError("coords contain non-finite values")
        if any(not np.isfinite(v) or v < 0 for v in self.kl_history):
            raise ValueError("kl_history must be finite and >= 0")
        coords.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "seen_mask", mask)
        object.__setattr__(self, "kl_history", tuple(float(v) for v in self.kl_history))

    @property
    def final_kl(self) -> float:
        return self.kl_history[-1]


def _squared_distances(X: np.ndarray) -> np.ndarray:
    sq = (X * X).sum(axis=1)
    D = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.maximum(D, 0.0, out=D)
    np.fill_diagonal(D, 0.0)
    return D


def _row_entropy_and_p(d2: np.ndarray, beta: float) -> tuple[float, np.ndarray]:
    """Shannon entropy (nats) and conditional row for precision beta.

    d2 holds squared distances to the other points (self excluded). Shifted
    by the row minimum so exp never underflows to an all-zero row.
    """
    shifted = d2 - d2.min()
    e = np.exp(-shifted * beta)
    s = e.sum()
    p = e / s
    entropy = np.log(s) + beta * float(p @ shifted)
    return entropy, p


def conditional_affinities(X: np.ndarray, perplexity: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-row conditional distributions P_{j|i} and the found precisions.

    Each row's beta is located by binary search (at most 200 steps) until the
    entropy matches log(perplexity) to 1e-10 in nats, far inside the 1e-4
    contract so that the calibrated rows are reproducible across input
    rescaling.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need at least 2 points to project")
    if not np.isfinite(X).all():
        raise ValueError("input contains non-finite values")
    n = X.shape[0]
    target = np.log(perplexity)
    D = _squared_distances(X)
    others = ~np.eye(n, dtype=bool)

    P = np.zeros((n, n))
    betas = np.ones(n)
    for i in range(n):
        d2 = D[i][others[i]]
        beta = 1.0
        beta_min, beta_max = -np.inf, np.inf
        entropy, p = _row_entropy_and_p(d2, beta)
        for _ in range(200):
            diff = entropy - target
            if abs(diff) < 1e-10:
                break
            if diff > 0:  # too spread out: sharpen
                beta_min = beta
                beta = beta * 2.0 if beta_max == np.inf else (beta + beta_max) / 2.0
            else:
                beta_max = beta
                beta = beta / 2.0 if beta_min == -np.inf else (beta + beta_min) / 2.0
            entropy, p = _row_entropy_and_p(d2, beta)
        P[i][others[i]] = p
        betas[i] = beta
    return P, betas


def compute_affinities(X: np.ndarray, perplexity: float) -> np.ndarray:
    """Symmetrized joint affinities P = (P_{j|i} + P_{i|j}) / (2N).

    Exactly symmetric with a zero diagonal; sums to 1 up to rounding. The
    perplexity is capped at (N-1)/3 before the bandwidth search.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need at least 2 points to project")
    n = X.shape[0]
    perplexity = min(float(perplexity), (n - 1) / 3.0)
    if perplexity <= 0:
        raise ValueError("perplexity must be > 0")
    cond, _ = conditional_affinities(X, perplexity)
    return (cond + cond.T) / (2.0 * n)


def _kl_divergence(P: np.ndarray, Q: np.ndarray) -> float:
    logs = np.log(np.maximum(P, EPS)) - np.log(np.maximum(Q, EPS))
    return float((P * logs).sum())


def project(X: np.ndarray, config: TsneConfig, seen_mask: np.ndarray | None = None) -> ProjectionResult:
    """Embed the rows of X in 2D; deterministic for a fixed config.seed.

    kl_history records KL(P || Q) against the unexaggerated P at every
    iteration. Divergence (non-finite coordinates or KL) raises
    ProjectionDiverged with the iteration index.
    """
    X = np.asarray(X, dtype=np.float64)
    P = compute_affinities(X, config.perplexity)
    n = X.shape[0]
    if seen_mask is None:
        seen_mask = np.ones(n, dtype=bool)

    rng = np.random.default_rng(config.seed)
    Y = rng.standard_normal((n, 2)) * 1e-2  # N(0, 1e-4) start
    velocity = np.zeros_like(Y)
    off_diag = ~np.eye(n, dtype=bool)

    def low_dim_q(coords: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        W = 1.0 / (1.0 + _squared_distances(coords))
        W[~off_diag] = 0.0
        return W, W / W.sum()

    W, Q = low_dim_q(Y)
    history: list[float] = []
    for it in range(config.iterations):
        exaggerate = it < EXAGGERATION_STOP
        momentum = config.momentum_start if it < MOMENTUM_SWITCH else config.momentum_final
        P_eff = P * config.early_exaggeration if exaggerate else P

        # dC/dy_i = 4 sum_j (p_ij - q_ij) w_ij (y_i - y_j)
        PQW = (P_eff - Q) * W
        grad = 4.0 * ((np.diag(PQW.sum(axis=1)) - PQW) @ Y)

        velocity = momentum * velocity - config.learning_rate * grad
        Y = Y + velocity
        Y = Y - Y.mean(axis=0)

        if not np.isfinite(Y).all():
            raise ProjectionDiverged(it)
        W, Q = low_dim_q(Y)
        kl = _kl_divergence(P, Q)  # always against the true P
        if not np.isfinite(kl):
            raise ProjectionDiverged(it)
        history.append(kl)

    return ProjectionResult(coords=Y, kl_history=tuple(history), seen_mask=seen_mask)
