"""2-D Gaussian decision-boundary demo: vanilla Mixup vs semantic-aware Mixup."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tape
from .config import ToyConfig
from .margin import soft_targets
from .semantics import build_profile, label_weight, sample_lambda
from .training import adam_update, cross_entropy_soft, seeded_rng

METHODS = ("vanilla_mixup", "sdmix")


class ToyMLP:
    """2 -> hidden -> C perceptron with one ReLU layer."""

    def __init__(self, num_classes: int, hidden: int, seed: int):
        rng = seeded_rng(seed, 10)
        b1, b2 = 1 / np.sqrt(2), 1 / np.sqrt(hidden)
        self.num_classes = num_classes
        self.params = {
            "l1.weight": rng.uniform(-b1, b1, (hidden, 2)), "l1.bias": rng.uniform(-b1, b1, hidden),
            "l2.weight": rng.uniform(-b2, b2, (num_classes, hidden)), "l2.bias": rng.uniform(-b2, b2, num_classes),
        }

    def logits(self, x, bound=None):
        p = bound if bound is not None else {k: ad.Tensor(v) for k, v in self.params.items()}
        h = ad.relu(ad.linear(x, p["l1.weight"], p["l1.bias"]))
        return ad.linear(h, p["l2.weight"], p["l2.bias"])

    def predict(self, x) -> np.ndarray:
        return self.logits(np.asarray(x, dtype=np.float64)).value.argmax(axis=1)


def class_layout(cfg: ToyConfig) -> tuple[np.ndarray, np.ndarray]:
    """Class centers and spreads; class 0 is the wide one."""
    C = cfg.num_classes
    if C == 2:
        centers = np.array([[-cfg.separation / 2, 0.0], [cfg.separation / 2, 0.0]])
    else:
        ang = 2 * np.pi * np.arange(C) / C
        centers = (cfg.separation / (2 * np.sin(np.pi / C))) * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    spreads = np.full(C, cfg.base_spread)
    spreads[0] *= cfg.spread_ratio
    return centers, spreads


def sample_points(cfg: ToyConfig, n_per_class: int, rng) -> tuple[np.ndarray, np.ndarray]:
    centers, spreads = class_layout(cfg)
    X = np.concatenate([c + s * rng.standard_normal((n_per_class, 2)) for c, s in zip(centers, spreads)])
    y = np.repeat(np.arange(cfg.num_classes), n_per_class)
    return X, y


def train_toy(method: str, X: np.ndarray, y: np.ndarray, cfg: ToyConfig, seed: int) -> ToyMLP:
    if method not in METHODS:
        raise ValueError(f"unknown toy method {method!r}")
    net = ToyMLP(cfg.num_classes, cfg.hidden, seed)
    rng = seeded_rng(seed, 11)
    profile = None
    if method == "sdmix":
        profile = build_profile({(0, c): X[y == c] for c in range(cfg.num_classes)}, space="input",
                                metric="l2", variant=cfg.range_variant)
    moments, step = {}, 0
    n = len(y)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        partner = rng.permutation(n)
        for s in range(0, n, cfg.batch_size):
            i, j = order[s : s + cfg.batch_size], partner[s : s + cfg.batch_size]
            lams = np.array([sample_lambda(cfg.alpha, rng) for _ in range(len(i))])
            t = np.array([label_weight(l, int(y[a]), 0, int(y[b]), 0, profile) for l, a, b in zip(lams, i, j)])
            x_mix = ad.mix(X[i], X[j], lams).value
            tape = Tape()
            bound = {k: tape.leaf(v) for k, v in net.params.items()}
            loss = cross_entropy_soft(net.logits(x_mix, bound), soft_targets(y[i], y[j], t, cfg.num_classes))
            g = tape.backward(loss)
            step += 1
            net.params, moments = adam_update(net.params, {k: g[v.node_id] for k, v in bound.items()},
                                              moments, step, cfg.learning_rate, 0.0)
    return net


def boundary_grid(net: ToyMLP, lo: np.ndarray, hi: np.ndarray, size: int):
    gx, gy = np.meshgrid(np.linspace(lo[0], hi[0], size), np.linspace(lo[1], hi[1], size))
    pred = net.predict(np.stack([gx.ravel(), gy.ravel()], axis=1)).reshape(gx.shape)
    return gx, gy, pred


def near_wide_points(cfg: ToyConfig, n: int, rng) -> np.ndarray:
    """Wide-class test points lying on the side of its center facing the nearest other class."""
    centers, spreads = class_layout(cfg)
    pts = centers[0] + spreads[0] * rng.standard_normal((4 * n, 2))
    others = centers[1:]
    nearest = others[np.argmin(np.linalg.norm(others - centers[0], axis=1))]
    direction = (nearest - centers[0]) / np.linalg.norm(nearest - centers[0])
    keep = (pts - centers[0]) @ direction > 0
    return pts[keep][:n]


@dataclass
class ToyResult:
    seed: int
    method: str
    test_accuracy: float
    near_wide_accuracy: float
    grid: tuple[np.ndarray, np.ndarray, np.ndarray]


def run_toy_seed(cfg: ToyConfig, seed: int) -> list[ToyResult]:
    rng = seeded_rng(seed, 12)
    X, y = sample_points(cfg, cfg.points_per_class, rng)
    Xt, yt = sample_points(cfg, cfg.points_per_class, rng)
    near = near_wide_points(cfg, cfg.points_per_class, rng)
    lo = np.minimum(X.min(axis=0), Xt.min(axis=0)) - 0.5
    hi = np.maximum(X.max(axis=0), Xt.max(axis=0)) + 0.5
    out = []
    for method in METHODS:
        net = train_toy(method, X, y, cfg, seed)
        out.append(ToyResult(seed, method, float((net.predict(Xt) == yt).mean()),
                             float((net.predict(near) == 0).mean()), boundary_grid(net, lo, hi, cfg.grid)))
    return out


def toy_boundary_demo(cfg: ToyConfig, out_dir, figures: bool = True) -> list[ToyResult]:
    """Train both methods per seed; write grid CSVs, an accuracy table and (optionally) a figure."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = []
    for seed in cfg.seeds:
        results.extend(run_toy_seed(cfg, seed))
    for r in results:
        gx, gy, pred = r.grid
        with open(out / f"grid_{r.method}_seed{r.seed}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "y", "predicted_class"])
            for a, b, c in zip(gx.ravel(), gy.ravel(), pred.ravel()):
                w.writerow([repr(float(a)), repr(float(b)), int(c)])
    with open(out / "toy_summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "method", "test_accuracy", "near_wide_accuracy"])
        for r in results:
            w.writerow([r.seed, r.method, repr(r.test_accuracy), repr(r.near_wide_accuracy)])
    if figures and results:
        from . import plotting

        seed0 = cfg.seeds[0]
        rng = seeded_rng(seed0, 12)
        pts = sample_points(cfg, cfg.points_per_class, rng)
        plotting.plot_toy_boundaries({r.method: r.grid for r in results if r.seed == seed0}, pts,
                                     out / "toy_boundary.png")
    return results
