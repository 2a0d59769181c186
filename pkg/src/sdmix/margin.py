"""First-order large-margin hinge loss and its mixed-label combination."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .semantics import MixedSample

GAMMA_GRID = (10.0, 100.0, 10000.0, 100000.0)
TOP_C_GRID = (1, 2, 5)


@dataclass(frozen=True)
class MarginConfig:
    gamma: float = 10.0
    top_c: int = 1
    p: float = 2.0
    denom_floor: float = 1e-8
    epsilon_noisy: float = 0.5

    @property
    def q(self) -> float:
        if self.p == 1:
            return np.inf
        if np.isinf(self.p):
            return 1.0
        return self.p / (self.p - 1.0)

    def validate(self, num_classes: int | None = None) -> None:
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.top_c < 1:
            raise ValueError(f"top_c must be a positive integer, got {self.top_c}")
        if num_classes is not None and self.top_c > num_classes - 1:
            raise ValueError(f"top_c={self.top_c} exceeds num_classes - 1 = {num_classes - 1}")
        if not self.p >= 1:
            raise ValueError(f"norm order p must be >= 1, got {self.p}")
        if not (self.denom_floor > 0 and self.epsilon_noisy > 0):
            raise ValueError("denom_floor and epsilon_noisy must be positive")


def boundary_distance_linear(W, b, x, c1: int, c2: int) -> float:
    """Exact l2 distance from ``x`` to the set where affine scores c1 and c2 tie."""
    W, b, x = (np.asarray(a, dtype=np.float64) for a in (W, b, x))
    if c1 == c2:
        raise ValueError("degenerate boundary: c1 == c2")
    w = W[c1] - W[c2]
    norm = np.linalg.norm(w)
    if norm == 0:
        raise ValueError("degenerate boundary: identical weight rows")
    return float(abs(w @ x + b[c1] - b[c2]) / norm)


def gradient_gap_norms(grads: list[np.ndarray], y, q: float) -> np.ndarray:
    """``||grad_c - grad_y||_q`` per sample and class, shape (B, C).

    ``grads[c]`` holds per-sample gradients of class score c, shape (B, ...).
    """
    y = np.asarray(y)
    G = np.stack([g.reshape(g.shape[0], -1) for g in grads], axis=1)  # (B, C, D)
    gy = G[np.arange(len(y)), y][:, None, :]
    return np.linalg.norm(G - gy, ord=q, axis=2) if np.isfinite(q) else np.abs(G - gy).max(axis=2)


def hinge_terms(scores: Tensor, norms: np.ndarray, y, cfg: MarginConfig,
                diagnostics: dict | None = None) -> Tensor:
    """Per-sample aggregated hinge: sum of the top_c largest
    ``max(0, gamma + (h_c - h_y) / norm_c)`` over ``c != y``.

    ``norms`` is a constant: no gradient flows through the denominator.
    """
    y = np.asarray(y, dtype=np.int64)
    B, C = scores.shape
    top_c = min(cfg.top_c, C - 1)
    own = np.zeros((B, C), dtype=bool)
    own[np.arange(B), y] = True
    floored = (norms < cfg.denom_floor) & ~own
    if diagnostics is not None and floored.any():
        diagnostics["denom_floor"] = diagnostics.get("denom_floor", 0) + int(floored.sum())
    denom = np.where(own, 1.0, np.maximum(norms, cfg.denom_floor))
    gap = ad.sub(scores, ad.reshape(ad.pick(scores, y), (B, 1)))
    hinge = ad.relu(ad.add(ad.scale(gap, 1.0 / denom), cfg.gamma))
    vals = np.where(own, -np.inf, hinge.value)
    order = np.argsort(-vals, axis=1, kind="stable")[:, :top_c]
    select = np.zeros((B, C))
    np.put_along_axis(select, order, 1.0, axis=1)
    select[own] = 0.0
    return ad.total(ad.scale(hinge, select), axis=1)


def _bound(net, tape: Tape | None):
    tape = tape if tape is not None else Tape()
    return tape, net.bind(tape)


def margin_loss_hard(net, x, y: int, cfg: MarginConfig, *, space: str = "input",
                     tape: Tape | None = None, bound=None, diagnostics: dict | None = None) -> Tensor:
    """Aggregated hinge loss for one window (or one feature vector when
    ``space='feature'``) with hard label ``y``; returned on a tape."""
    return _mixed_margin(net, np.asarray(x, dtype=np.float64)[None], np.array([y]), np.array([y]),
                         np.array([1.0]), cfg, space=space, tape=tape, bound=bound,
                         diagnostics=diagnostics)


def sdmix_loss(net, mixed: MixedSample, cfg: MarginConfig, *, space: str = "input",
               tape: Tape | None = None, bound=None, diagnostics: dict | None = None) -> Tensor:
    """``t * L(x_tilde, y1) + (1 - t) * L(x_tilde, y2)``; one term when y1 == y2."""
    return _mixed_margin(net, np.asarray(mixed.x_tilde, dtype=np.float64)[None], np.array([mixed.y1]),
                         np.array([mixed.y2]), np.array([mixed.t]), cfg, space=space, tape=tape,
                         bound=bound, diagnostics=diagnostics)


def _mixed_margin(net, x, y1, y2, t, cfg, *, space, tape, bound, diagnostics) -> Tensor:
    if bound is None:
        tape, bound = _bound(net, tape)
    if space == "input":
        scores = net.logits(tape.leaf(x) if tape is not None else x, training=False, bound=bound)
        grads = net.batch_input_gradients(x, range(net.arch.num_classes))
    else:
        scores = net.classify(x, bound)
        W = net.params["fc.weight"]
        grads = [np.broadcast_to(W[c], (len(x), W.shape[1])) for c in range(W.shape[0])]
    per_sample = mixed_margin_terms(scores, grads, y1, y2, t, cfg, diagnostics)
    return ad.total(per_sample)


def mixed_margin_terms(scores: Tensor, grads: list[np.ndarray], y1, y2, t, cfg: MarginConfig,
                       diagnostics: dict | None = None) -> Tensor:
    """Per-sample mixed-label margin loss, shape (B,)."""
    y1 = np.asarray(y1, dtype=np.int64)
    y2 = np.asarray(y2, dtype=np.int64)
    t = np.asarray(t, dtype=np.float64)
    same = y1 == y2
    w1 = np.where(same, 1.0, t)
    w2 = np.where(same, 0.0, 1.0 - t)
    l1 = hinge_terms(scores, gradient_gap_norms(grads, y1, cfg.q), y1, cfg, diagnostics)
    if same.all():
        return ad.scale(l1, w1)
    l2 = hinge_terms(scores, gradient_gap_norms(grads, y2, cfg.q), y2, cfg, diagnostics)
    return ad.add(ad.scale(l1, w1), ad.scale(l2, w2))


def soft_targets(y1, y2, t, num_classes: int) -> np.ndarray:
    y1 = np.asarray(y1, dtype=np.int64)
    y2 = np.asarray(y2, dtype=np.int64)
    t = np.asarray(t, dtype=np.float64)
    out = np.zeros((len(y1), num_classes))
    rows = np.arange(len(y1))
    out[rows, y1] += t
    out[rows, y2] += 1.0 - t
    return out


def count_virtual_noisy(net, mixed_batch: list[MixedSample], epsilon: float, *,
                        space: str = "input") -> int:
    """Mixed samples whose softmax output is at least ``epsilon`` away (l1)
    from their soft label."""
    if not mixed_batch:
        return 0
    x = np.stack([np.asarray(m.x_tilde, dtype=np.float64) for m in mixed_batch])
    scores = net.classify(x) if space == "feature" else net.logits(x, training=False)
    probs = ad.softmax(scores.value)
    target = soft_targets([m.y1 for m in mixed_batch], [m.y2 for m in mixed_batch],
                          [m.t for m in mixed_batch], probs.shape[1])
    return int((np.abs(probs - target).sum(axis=1) >= epsilon).sum())
