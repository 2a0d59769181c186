"""Leave-one-domain-out experiments, hyperparameter sweeps and report files."""

from __future__ import annotations

import csv
import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, echo_config, parse_config
from .data import DataError, DomainDataset, generate_synthetic, load_domain_csv, sliding_windows
from .margin import count_virtual_noisy
from .metrics import Metrics, evaluate
from .semantics import MixedSample, label_weight, sample_lambda
from .training import SEMANTIC_ALGORITHMS, FitResult, fit, make_paired_batch, seeded_rng, steps_per_epoch

HISTORY_COLUMNS = ("target", "epoch", "train_loss", "val_accuracy", "degenerate_t", "denom_floor")


def load_domains(cfg: ExperimentConfig) -> list[DomainDataset]:
    if cfg.synthetic is not None:
        return generate_synthetic(cfg.synthetic, cfg.synthetic_seed)
    by_domain: dict[int, list] = {}
    for path in cfg.data.csv:
        series = load_domain_csv(path)
        windows = sliding_windows(series, cfg.data.window_len, cfg.data.overlap)
        by_domain.setdefault(series.domain_id, []).extend(windows)
    domains = []
    for dom in sorted(by_domain):
        if not by_domain[dom]:
            raise DataError(f"domain {dom}: no label-homogeneous windows of length {cfg.data.window_len}")
        domains.append(DomainDataset.from_windows(by_domain[dom], dom))
    if not domains:
        raise DataError("no data loaded")
    return domains


def resolve_targets(cfg: ExperimentConfig, domains: list[DomainDataset]) -> list[int]:
    ids = [d.domain_id for d in domains]
    if cfg.targets == "all":
        return ids
    missing = [t for t in cfg.targets if t not in ids]
    if missing:
        raise DataError(f"target domains {missing} not present (have {ids})")
    return list(cfg.targets)


@dataclass
class TargetResult:
    target: int
    fit: FitResult
    metrics: Metrics
    confusion: np.ndarray
    virtual_noisy: int


@dataclass
class RunReport:
    algorithm: str
    seed: int
    config_text: str
    targets: list[TargetResult] = field(default_factory=list)
    out_dir: Path | None = None

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean([t.metrics.accuracy for t in self.targets]))


def _virtual_noisy(res: FitResult, cfg: ExperimentConfig, seed: int) -> int:
    """Virtual-noisy count of the selected model over one epoch of fresh mixed source batches."""
    t = cfg.train
    rng = seeded_rng(seed, 2)
    net = res.net
    n_steps = steps_per_epoch([len(d) for d in res.train], t.batch_per_domain)
    mixed = []
    profile = res.final_profile if t.algorithm in SEMANTIC_ALGORITHMS else None
    for _ in range(n_steps):
        b = make_paired_batch(res.train, t.batch_per_domain, rng)
        if t.mix_space == "feature":
            x1, x2 = net.features(b.X1).value, net.features(b.X2).value
        else:
            x1, x2 = b.X1, b.X2
        for k in range(len(b)):
            lam = sample_lambda(t.alpha, rng)
            w = label_weight(lam, int(b.y1[k]), b.dom_i, int(b.y2[k]), b.dom_j, profile)
            mixed.append(MixedSample(lam * x1[k] + (1 - lam) * x2[k], int(b.y1[k]), int(b.y2[k]), w, lam,
                                     (b.dom_i, b.dom_j)))
    return count_virtual_noisy(net, mixed, t.margin.epsilon_noisy, space=t.mix_space)


def _r(x: float) -> str:
    return repr(float(x))


def write_run_files(report: RunReport, out: Path, figures: bool) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(report.config_text)
    with open(out / "history.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_COLUMNS)
        for tr in report.targets:
            for h in tr.fit.history:
                w.writerow([tr.target, h["epoch"], _r(h["train_loss"]), _r(h["val_accuracy"]),
                            h["degenerate_t"], h["denom_floor"]])
    with open(out / "metrics.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["target", "class", "precision", "recall", "f1", "support", "accuracy"])
        for tr in report.targets:
            m, cm = tr.metrics, tr.confusion
            for c in range(len(m.f1)):
                w.writerow([tr.target, c, _r(m.precision[c]), _r(m.recall[c]), _r(m.f1[c]),
                            int(cm[c].sum()), ""])
            w.writerow([tr.target, "macro", _r(m.precision.mean()), _r(m.recall.mean()), _r(m.macro_f1),
                        m.count, _r(m.accuracy)])
    with open(out / "confusion.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["target", "true", "predicted", "count"])
        for tr in report.targets:
            for i, j in itertools.product(range(tr.confusion.shape[0]), repeat=2):
                w.writerow([tr.target, i, j, int(tr.confusion[i, j])])
    for tr in report.targets:
        tr.fit.net.save(out / f"model_target{tr.target}.ckpt")
        if tr.fit.final_profile is not None:
            (out / f"profile_target{tr.target}.csv").write_text(tr.fit.final_profile.to_csv())
    (out / "report.txt").write_text(render_report(report))
    if figures:
        from . import plotting

        plotting.plot_history({tr.target: tr.fit.history for tr in report.targets}, out / "history.png",
                              f"{report.algorithm}, seed {report.seed}")
        for tr in report.targets:
            plotting.plot_confusion(tr.confusion, out / f"confusion_target{tr.target}.png",
                                    f"target {tr.target}")


def render_report(report: RunReport) -> str:
    lines = [f"algorithm: {report.algorithm}", f"seed: {report.seed}", ""]
    for tr in report.targets:
        m = tr.metrics
        d = tr.fit.diagnostics
        lines += [
            f"target domain {tr.target}",
            f"  held-out accuracy: {m.accuracy:.4f}  macro-F1: {m.macro_f1:.4f}  windows: {m.count}",
            f"  best epoch: {tr.fit.best_epoch}  source validation accuracy: {tr.fit.best_accuracy:.4f}",
            "  per class (precision / recall / F1):",
        ]
        lines += [f"    {c}: {m.precision[c]:.4f} / {m.recall[c]:.4f} / {m.f1[c]:.4f}" for c in range(len(m.f1))]
        lines += [
            "  confusion (rows true, columns predicted):",
            *("    " + " ".join(f"{v:5d}" for v in row) for row in tr.confusion),
            f"  diagnostics: degenerate_t={d['degenerate_t']} denom_floor={d['denom_floor']} "
            f"virtual_noisy={tr.virtual_noisy}",
            "",
        ]
    if report.targets:
        lines.append(f"mean held-out accuracy: {report.mean_accuracy:.4f}")
    lines += ["", "weight decay is decoupled (subtracted as lr * wd * param)", "",
              "--- resolved configuration ---", report.config_text]
    return "\n".join(lines)


def run_single(cfg: ExperimentConfig, domains: list[DomainDataset], out: Path | None = None,
               figures: bool | None = None) -> RunReport:
    """Leave-one-domain-out over the configured targets with ``cfg.train`` as is."""
    figures = cfg.figures if figures is None else figures
    single = replace(cfg, algorithms=(cfg.train.algorithm,), seeds=(cfg.train.seed,))
    report = RunReport(cfg.train.algorithm, cfg.train.seed, echo_config(single))
    for target in resolve_targets(cfg, domains):
        res = fit(cfg.train, domains, holdout_domain=target, model=cfg.model)
        holdout = next(d for d in domains if d.domain_id == target)
        metrics, cm = evaluate(res.net, holdout)
        report.targets.append(TargetResult(target, res, metrics, cm, _virtual_noisy(res, cfg, cfg.train.seed)))
    if out is not None:
        write_run_files(report, out, figures)
        report.out_dir = out
    return report


def summarize(reports: list[RunReport], out: Path, figures: bool) -> list[dict]:
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["algorithm", "seed", "target", "accuracy", "macro_f1", "best_epoch", "best_val_accuracy"])
        for r in reports:
            for tr in r.targets:
                w.writerow([r.algorithm, r.seed, tr.target, _r(tr.metrics.accuracy), _r(tr.metrics.macro_f1),
                            tr.fit.best_epoch, _r(tr.fit.best_accuracy)])
    rows = []
    for alg in dict.fromkeys(r.algorithm for r in reports):
        accs = [r.mean_accuracy for r in reports if r.algorithm == alg]
        rows.append({"algorithm": alg, "runs": len(accs), "mean_accuracy": float(np.mean(accs)),
                     "std_accuracy": float(np.std(accs))})
    with open(out / "summary_by_algorithm.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["algorithm", "runs", "mean_accuracy", "std_accuracy"])
        for row in rows:
            w.writerow([row["algorithm"], row["runs"], _r(row["mean_accuracy"]), _r(row["std_accuracy"])])
    if figures and rows:
        from . import plotting

        plotting.plot_summary(rows, out / "summary.png")
    return rows


def _apply_seed(cfg: ExperimentConfig, seed: int | None) -> ExperimentConfig:
    if seed is None:
        return cfg
    return replace(cfg, train=replace(cfg.train, seed=seed), seeds=(seed,))


def run_experiment(config_path, out_dir, seed: int | None = None, figures: bool | None = None) -> list[RunReport]:
    """Every (algorithm, seed) of the config, one report directory each, plus summaries."""
    cfg = _apply_seed(parse_config(config_path), seed)
    figures = cfg.figures if figures is None else figures
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    domains = load_domains(cfg)
    reports = []
    for alg, s in itertools.product(cfg.run_algorithms, cfg.run_seeds):
        run_cfg = replace(cfg, train=replace(cfg.train, algorithm=alg, seed=s))
        reports.append(run_single(run_cfg, domains, out / f"{alg}_seed{s}", figures))
    summarize(reports, out, figures)
    return reports


# -- sweep ----------------------------------------------------------------------


def sweep_grid(cfg: ExperimentConfig, num_classes: int) -> list[dict]:
    grid = cfg.sweep
    combos = []
    for alpha, top_c, gamma in itertools.product(grid["alpha"], grid["top_c"], grid["gamma"]):
        if top_c > num_classes - 1:
            continue
        combos.append({"alpha": float(alpha), "top_c": int(top_c), "gamma": float(gamma)})
    # the margin knobs are inert for algorithms without the margin loss
    if cfg.train.algorithm not in ("sdmix_full", "sdmix_margin_only"):
        seen, uniq = set(), []
        for c in combos:
            if c["alpha"] not in seen:
                seen.add(c["alpha"])
                uniq.append({"alpha": c["alpha"], "top_c": cfg.train.margin.top_c, "gamma": cfg.train.margin.gamma})
        combos = uniq
    return combos


def _sweep_one(args):
    cfg, domains, out, figures = args
    report = run_single(cfg, domains, out, figures)
    val = float(np.mean([t.fit.best_accuracy for t in report.targets]))
    return val, report.mean_accuracy


def run_sweep(config_path, out_dir, seed: int | None = None, jobs: int = 1,
              figures: bool | None = None) -> tuple[dict, list[dict]]:
    """Cross product of alpha x top_c x gamma; the winner is chosen by source validation accuracy."""
    cfg = _apply_seed(parse_config(config_path), seed)
    figures = cfg.figures if figures is None else figures
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    domains = load_domains(cfg)
    num_classes = cfg.model.num_classes or max(int(d.arrays()[1].max()) for d in domains) + 1
    combos = sweep_grid(cfg, num_classes)
    tasks = []
    for k, combo in enumerate(combos):
        train = replace(cfg.train, alpha=combo["alpha"],
                        margin=replace(cfg.train.margin, top_c=combo["top_c"], gamma=combo["gamma"]))
        tasks.append((replace(cfg, train=train), domains, out / f"combo{k:03d}", figures))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_one, tasks))
    else:
        results = [_sweep_one(t) for t in tasks]
    rows = []
    for k, (combo, (val, test)) in enumerate(zip(combos, results)):
        rows.append({"combo": k, **combo, "mean_val_accuracy": val, "mean_target_accuracy": test})
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["combo", "alpha", "top_c", "gamma", "mean_val_accuracy", "mean_target_accuracy"])
        for r in rows:
            w.writerow([r["combo"], _r(r["alpha"]), r["top_c"], _r(r["gamma"]), _r(r["mean_val_accuracy"]),
                        _r(r["mean_target_accuracy"])])
    best = max(rows, key=lambda r: (r["mean_val_accuracy"], -r["combo"]))
    best_cfg = tasks[best["combo"]][0]
    (out / "best.ini").write_text(echo_config(replace(best_cfg, algorithms=(), seeds=())))
    return best, rows
