"""Class centers, semantic ranges, the semantic factor and semantic-aware mixing."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

T_FLOOR = 1e-12
METRICS = ("l1", "l2", "cosine")
VARIANTS = ("max", "mean")
SPACES = ("input", "feature")


class MissingProfileEntry(KeyError):
    pass


def class_center(samples) -> np.ndarray:
    x = _as_matrix(samples)
    if x.shape[0] == 0:
        raise ValueError("empty class slice")
    return x.mean(axis=0)


def _as_matrix(samples) -> np.ndarray:
    if isinstance(samples, np.ndarray):
        x = samples.astype(np.float64, copy=False)
        return x.reshape(x.shape[0], -1) if x.ndim != 1 else x.reshape(1, -1)
    samples = list(samples)
    if not samples:
        return np.zeros((0, 0))
    try:
        return np.stack([np.ravel(np.asarray(s, dtype=np.float64)) for s in samples])
    except ValueError:
        raise ValueError("class slice has non-uniform dimensionality") from None


def distances(samples, center, metric: str = "l2") -> np.ndarray:
    x = _as_matrix(samples)
    mu = np.ravel(np.asarray(center, dtype=np.float64))
    diff = x - mu
    if metric == "l1":
        return np.abs(diff).sum(axis=1)
    if metric == "l2":
        return np.sqrt((diff * diff).sum(axis=1))
    if metric == "cosine":
        nx = np.linalg.norm(x, axis=1)
        nmu = np.linalg.norm(mu)
        if nmu == 0 or np.any(nx == 0):
            raise ValueError("cosine distance undefined for zero vectors")
        return 1.0 - (x @ mu) / (nx * nmu)
    raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")


def semantic_range(samples, center, metric: str = "l2", variant: str = "max") -> float:
    x = _as_matrix(samples)
    if x.shape[0] == 0:
        raise ValueError("empty class slice")
    d = distances(x, center, metric)
    if variant == "max":
        return float(d.max())
    if variant == "mean":
        return float(d.mean())
    raise ValueError(f"unknown range variant {variant!r}; expected one of {VARIANTS}")


def semantic_factor(lam: float, r1: float, r2: float, diagnostics: dict | None = None) -> float:
    """Label weight ``lam*r1 / (lam*r1 + (1-lam)*r2)``.

    Equal ranges return ``lam`` unchanged (the exact algebraic reduction), and a
    denominator below ``T_FLOOR`` falls back to ``lam`` with a counter bump.
    """
    if r1 == r2 and r1 > 0:
        return lam
    num = lam * r1
    den = num + (1.0 - lam) * r2
    if den < T_FLOOR:
        if diagnostics is not None:
            diagnostics["degenerate_t"] = diagnostics.get("degenerate_t", 0) + 1
        return lam
    return min(1.0, max(0.0, num / den))


@dataclass(frozen=True)
class SemanticProfile:
    centers: dict[tuple[int, int], np.ndarray]
    ranges: dict[tuple[int, int], float]
    space: str = "input"
    metric: str = "l2"
    variant: str = "max"
    epoch_stamp: int = 0
    missing: frozenset = field(default_factory=frozenset)

    def range_of(self, domain: int, cls: int) -> float:
        key = (domain, cls)
        if key not in self.ranges:
            raise MissingProfileEntry(f"no semantic profile entry for domain {domain}, class {cls}")
        return self.ranges[key]

    @classmethod
    def constant(cls, keys: Iterable[tuple[int, int]], value: float = 1.0, **kw) -> SemanticProfile:
        keys = list(keys)
        return cls(centers={}, ranges={k: float(value) for k in keys}, **kw)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["domain", "class", "range", "space", "metric", "variant"])
        for (d, c) in sorted(self.ranges):
            w.writerow([d, c, repr(self.ranges[(d, c)]), self.space, self.metric, self.variant])
        for (d, c) in sorted(self.missing):
            w.writerow([d, c, "missing", self.space, self.metric, self.variant])
        return buf.getvalue()


def build_profile(groups: dict[tuple[int, int], np.ndarray], *, space: str, metric: str,
                  variant: str, epoch_stamp: int = 0,
                  expected: Iterable[tuple[int, int]] = ()) -> SemanticProfile:
    """Profile from already-embedded samples grouped by (domain, class)."""
    centers, ranges = {}, {}
    for key in sorted(groups):
        x = _as_matrix(groups[key])
        if x.shape[0] == 0:
            continue
        centers[key] = class_center(x)
        ranges[key] = semantic_range(x, centers[key], metric, variant)
    missing = frozenset(k for k in expected if k not in ranges)
    return SemanticProfile(centers, ranges, space, metric, variant, epoch_stamp, missing)


@dataclass(frozen=True)
class MixedSample:
    x_tilde: np.ndarray
    y1: int
    y2: int
    t: float
    lam: float
    domains: tuple[int, int]


def semantic_mix(x1, y1: int, dom_i: int, x2, y2: int, dom_j: int, lam: float,
                 profile: SemanticProfile | None, diagnostics: dict | None = None) -> MixedSample:
    """Mix inputs with ``lam``; weight labels with the semantic factor.

    ``profile=None`` gives vanilla mixing (label weight ``lam``).  A
    (domain, class) entry recorded as missing at refresh time also falls back to
    ``lam`` and bumps ``diagnostics['degenerate_t']``.
    """
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    x_tilde = lam * x1 + (1.0 - lam) * x2
    t = label_weight(lam, y1, dom_i, y2, dom_j, profile, diagnostics)
    return MixedSample(x_tilde, int(y1), int(y2), t, lam, (dom_i, dom_j))


def label_weight(lam: float, y1: int, dom_i: int, y2: int, dom_j: int,
                 profile: SemanticProfile | None, diagnostics: dict | None = None) -> float:
    if profile is None:
        return lam
    for key in ((dom_i, y1), (dom_j, y2)):
        if key in profile.missing:
            if diagnostics is not None:
                diagnostics["degenerate_t"] = diagnostics.get("degenerate_t", 0) + 1
            return lam
    return semantic_factor(lam, profile.range_of(dom_i, y1), profile.range_of(dom_j, y2), diagnostics)


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based (Philox) generator; streams are reproducible across platforms."""
    return np.random.Generator(np.random.Philox(seed))


def sample_lambda(alpha: float, rng: np.random.Generator) -> float:
    """One Beta(alpha, alpha) draw as G1 / (G1 + G2) with Gamma(alpha, 1) variates."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    g1 = rng.standard_gamma(alpha)
    g2 = rng.standard_gamma(alpha)
    s = g1 + g2
    if s == 0.0:
        return 0.5
    return float(g1 / s)


def sample_lambdas(alpha: float, rng: np.random.Generator, n: int) -> np.ndarray:
    return np.array([sample_lambda(alpha, rng) for _ in range(n)])


def refresh_profile(net, groups: dict[tuple[int, int], np.ndarray], *, space: str = "feature",
                    metric: str = "l2", variant: str = "max", epoch_stamp: int = 0,
                    expected: Iterable[tuple[int, int]] = ()) -> SemanticProfile:
    """Recompute centers and ranges of raw windows grouped by (domain, class).

    Feature space embeds windows with inference-mode batchnorm.
    """
    if space not in SPACES:
        raise ValueError(f"unknown mix space {space!r}; expected one of {SPACES}")
    embedded = {}
    for key, x in groups.items():
        x = np.asarray(x, dtype=np.float64)
        if len(x) == 0:
            continue
        if space == "input":
            embedded[key] = x.reshape(len(x), -1)
        else:
            embedded[key] = np.concatenate(
                [net.features(x[i : i + 512], training=False).value for i in range(0, len(x), 512)]
            )
    return build_profile(embedded, space=space, metric=metric, variant=variant,
                         epoch_stamp=epoch_stamp, expected=expected)
