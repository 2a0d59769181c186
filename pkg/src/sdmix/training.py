"""Domain-paired mixup training: SDMix, its ablations, vanilla Mixup and DeepAll."""

from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tape
from .data import DomainDataset, SplitSpec, group_by_class, steps_per_epoch, train_val_split
from .margin import MarginConfig, mixed_margin_terms, soft_targets
from .model import ActivityNet, ArchSpec
from .semantics import SemanticProfile, label_weight, refresh_profile, sample_lambda

log = logging.getLogger(__name__)

ALGORITHMS = ("deepall", "vanilla_mixup", "sdmix_semantic_only", "sdmix_margin_only", "sdmix_full")
SEMANTIC_ALGORITHMS = ("sdmix_semantic_only", "sdmix_full")
MARGIN_ALGORITHMS = ("sdmix_margin_only", "sdmix_full")
ALPHA_GRID = (0.1, 0.2, 0.5, 1.0, 10.0)


class NumericError(ArithmeticError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    kernel_width: int = 6
    channels_per_block: tuple[int, int] = (16, 32)
    num_classes: int | None = None


@dataclass(frozen=True)
class TrainConfig:
    algorithm: str = "sdmix_full"
    alpha: float = 0.2
    margin: MarginConfig = field(default_factory=MarginConfig)
    mix_space: str = "feature"
    range_variant: str = "max"
    range_metric: str = "l2"
    refresh_every: int = 0  # steps between profile refreshes; 0 = once per epoch
    constant_range: float | None = None  # pin every semantic range (ablation / reduction checks)
    learning_rate: float = 1e-2
    weight_decay: float = 5e-4
    batch_per_domain: int = 32
    max_epochs: int = 150
    seed: int = 0
    split: SplitSpec = field(default_factory=SplitSpec)

    def validate(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.mix_space not in ("input", "feature"):
            raise ValueError(f"mix_space must be 'input' or 'feature', got {self.mix_space!r}")
        if self.batch_per_domain < 1 or self.max_epochs < 0 or self.refresh_every < 0:
            raise ValueError("batch_per_domain, max_epochs and refresh_every must be nonnegative")
        if self.constant_range is not None and not self.constant_range > 0:
            raise ValueError("constant_range must be positive")
        self.margin.validate()

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class PairedBatch:
    dom_i: int
    dom_j: int
    X1: np.ndarray
    y1: np.ndarray
    X2: np.ndarray
    y2: np.ndarray

    def __len__(self) -> int:
        return len(self.y1)


def _draw(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    # with replacement only when the split is smaller than the batch
    return rng.permutation(n)[:k] if n >= k else rng.integers(0, n, size=k)


def make_paired_batch(train_domains: list[DomainDataset], batch_per_domain: int,
                      rng: np.random.Generator) -> PairedBatch:
    """Two distinct domains drawn uniformly; ``batch_per_domain`` windows from each, paired by index."""
    live = [d for d in train_domains if len(d) > 0]
    if not live:
        raise ValueError("no source domain has training windows")
    if len(live) == 1:
        warnings.warn(f"single source domain: pairs are drawn within domain {live[0].domain_id}",
                      RuntimeWarning, stacklevel=2)
        a = b = live[0]
    else:
        i, j = rng.choice(len(live), size=2, replace=False)
        a, b = live[i], live[j]
    Xa, ya = a.arrays()
    Xb, yb = b.arrays()
    ia = _draw(len(ya), batch_per_domain, rng)
    ib = _draw(len(yb), batch_per_domain, rng)
    return PairedBatch(a.domain_id, b.domain_id, Xa[ia], ya[ia], Xb[ib], yb[ib])


def adam_update(params: dict, grads: dict, moments: dict, step: int, lr: float, wd: float,
                beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> tuple[dict, dict]:
    """One bias-corrected Adam step with decoupled weight decay.

    ``step`` counts from 1.  ``moments`` maps a name to ``(m, v)``; missing
    entries start at zero.  Returns new dicts, inputs are left untouched.
    """
    new_params, new_moments = {}, {}
    bc1 = 1.0 - beta1 ** step
    bc2 = 1.0 - beta2 ** step
    for k, p in params.items():
        g = grads[k]
        m, v = moments.get(k, (np.zeros_like(p), np.zeros_like(p)))
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        update = (m / bc1) / (np.sqrt(v / bc2) + eps)
        new_params[k] = p - lr * update - lr * wd * p
        new_moments[k] = (m, v)
    return new_params, new_moments


@dataclass
class TrainState:
    net: ActivityNet
    rng: np.random.Generator
    moments: dict = field(default_factory=dict)
    step: int = 0
    profile: SemanticProfile | None = None
    best_accuracy: float = -1.0
    best_net: ActivityNet | None = None
    best_epoch: int = -1
    diagnostics: dict = field(default_factory=lambda: {"degenerate_t": 0, "denom_floor": 0})


def cross_entropy_soft(scores, targets: np.ndarray):
    """Mean over rows of ``-sum_c targets[c] * log_softmax(scores)[c]``."""
    logp = ad.log_softmax(scores)
    return ad.scale(ad.total(ad.scale(logp, targets)), -1.0 / targets.shape[0])


def _lambdas(config: TrainConfig, rng: np.random.Generator, n: int) -> np.ndarray:
    return np.array([sample_lambda(config.alpha, rng) for _ in range(n)])


def step_loss(net: ActivityNet, batch: PairedBatch, config: TrainConfig, *, lams: np.ndarray | None,
              profile: SemanticProfile | None, tape: Tape, bound, diagnostics: dict | None = None):
    """Batch-mean loss of ``config.algorithm`` on one paired batch, recorded on ``tape``."""
    C = net.arch.num_classes
    if config.algorithm == "deepall":
        X = np.concatenate([batch.X1, batch.X2])
        y = np.concatenate([batch.y1, batch.y2])
        scores = net.logits(X, training=True, bound=bound)
        return cross_entropy_soft(scores, soft_targets(y, y, np.ones(len(y)), C))

    semantic = config.algorithm in SEMANTIC_ALGORITHMS
    t = np.array([
        label_weight(lam, int(a), batch.dom_i, int(b), batch.dom_j, profile if semantic else None, diagnostics)
        for lam, a, b in zip(lams, batch.y1, batch.y2)
    ])
    if config.mix_space == "input":
        x_mix = ad.mix(batch.X1, batch.X2, lams).value
        scores = net.logits(x_mix, training=True, bound=bound)
    else:
        B = len(batch)
        z = net.features(np.concatenate([batch.X1, batch.X2]), training=True, bound=bound)
        z_mix = ad.mix(ad.rows(z, np.arange(B)), ad.rows(z, np.arange(B, 2 * B)), lams)
        scores = net.classify(z_mix, bound)

    if config.algorithm in MARGIN_ALGORITHMS:
        if config.mix_space == "input":
            grads = net.batch_input_gradients(x_mix, range(C))
        else:
            W = net.params["fc.weight"]
            grads = [np.broadcast_to(W[c], (len(batch), W.shape[1])) for c in range(C)]
        per = mixed_margin_terms(scores, grads, batch.y1, batch.y2, t, config.margin, diagnostics)
        return ad.scale(ad.total(per), 1.0 / len(batch))
    return cross_entropy_soft(scores, soft_targets(batch.y1, batch.y2, t, C))


def train_step(state: TrainState, batch: PairedBatch, config: TrainConfig,
               lams: np.ndarray | None = None) -> float:
    """One Adam update on the mixed batch; returns the batch loss before the update.

    ``lams`` overrides the Beta draws (the rng is then not advanced).
    """
    if lams is None and config.algorithm != "deepall":
        lams = _lambdas(config, state.rng, len(batch))
    tape = Tape()
    bound = state.net.bind(tape)
    loss = step_loss(state.net, batch, config, lams=lams, profile=state.profile, tape=tape,
                     bound=bound, diagnostics=state.diagnostics)
    value = loss.item()
    if not np.isfinite(value):
        raise NumericError(f"nonfinite loss at step {state.step + 1} with config {config.as_dict()}")
    g = tape.backward(loss)
    grads = {k: g[t.node_id] for k, t in bound.items()}
    state.step += 1
    state.net.params, state.moments = adam_update(
        state.net.params, grads, state.moments, state.step, config.learning_rate, config.weight_decay
    )
    return value


def accuracy(net: ActivityNet, datasets: list[DomainDataset]) -> float:
    correct = total = 0
    for ds in datasets:
        if len(ds) == 0:
            continue
        X, y = ds.arrays()
        correct += int((net.predict(X) == y).sum())
        total += len(y)
    return correct / total if total else float("nan")


def _profile(state: TrainState, config: TrainConfig, train: list[DomainDataset], epoch: int,
             expected) -> SemanticProfile | None:
    if config.algorithm not in SEMANTIC_ALGORITHMS:
        return None
    if config.constant_range is not None:
        return SemanticProfile.constant(expected, config.constant_range, space=config.mix_space,
                                        metric=config.range_metric, variant=config.range_variant,
                                        epoch_stamp=epoch)
    return refresh_profile(state.net, group_by_class(train), space=config.mix_space,
                           metric=config.range_metric, variant=config.range_variant,
                           epoch_stamp=epoch, expected=expected)


@dataclass
class FitResult:
    net: ActivityNet
    history: list[dict]
    best_epoch: int
    best_accuracy: float
    diagnostics: dict
    final_profile: SemanticProfile | None = None
    train: list[DomainDataset] = field(default_factory=list)
    val: list[DomainDataset] = field(default_factory=list)


def seeded_rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, stream])))


def fit(config: TrainConfig, domains: list[DomainDataset], holdout_domain: int | None = None,
        model: ModelConfig = ModelConfig(), step_hook=None) -> FitResult:
    """Train on every domain except ``holdout_domain`` and keep the best-validation checkpoint.

    The held-out domain is filtered by id and never read.
    """
    config.validate()
    sources = [d for d in domains if d.domain_id != holdout_domain]
    if not sources:
        raise ValueError("empty source set: nothing to train on")
    split = SplitSpec(config.split.train_fraction, config.split.seed, config.split.stratified)
    train, val = zip(*(train_val_split(d, split) for d in sources))
    train, val = list(train), list(val)

    num_classes = model.num_classes
    labels = set()
    for d in train:
        labels.update(int(c) for c in np.unique(d.arrays()[1]))
    if num_classes is None:
        num_classes = max(labels) + 1
    config.margin.validate(num_classes)
    arch = ArchSpec(tuple(sources[0].window_shape), model.kernel_width, tuple(model.channels_per_block),
                    num_classes)
    net = ActivityNet.init(arch, config.seed)
    state = TrainState(net=net, rng=seeded_rng(config.seed, 1))
    state.best_net = net.copy()
    expected = sorted((d.domain_id, c) for d in train for c in range(num_classes))

    history = []
    n_steps = steps_per_epoch([len(d) for d in train], config.batch_per_domain)
    for epoch in range(1, config.max_epochs + 1):
        before = dict(state.diagnostics)
        losses = []
        for s in range(n_steps):
            due = s == 0 if config.refresh_every == 0 else state.step % config.refresh_every == 0
            if due:
                state.profile = _profile(state, config, train, epoch, expected)
            batch = make_paired_batch(train, config.batch_per_domain, state.rng)
            losses.append(train_step(state, batch, config))
            if step_hook is not None:
                step_hook(state, batch, losses[-1])
        acc = accuracy(state.net, val) if sum(len(v) for v in val) else accuracy(state.net, train)
        if acc > state.best_accuracy:
            state.best_accuracy, state.best_epoch, state.best_net = acc, epoch, state.net.copy()
        history.append({
            "epoch": epoch,
            "train_loss": float(np.mean(losses)),
            "val_accuracy": acc,
            "degenerate_t": state.diagnostics["degenerate_t"] - before["degenerate_t"],
            "denom_floor": state.diagnostics["denom_floor"] - before["denom_floor"],
        })
    return FitResult(state.best_net, history, state.best_epoch, state.best_accuracy,
                     dict(state.diagnostics), state.profile, train, val)
