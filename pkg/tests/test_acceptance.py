"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (the lines are printed even
when output capture is on).
"""

import time
import warnings

import numpy as np
import pytest
from scipy import stats

from sdmix import autodiff as ad
from sdmix.autodiff import Tape, finite_difference
from sdmix.benchmark import run_benchmark
from sdmix.data import (
    SensorSeries, SplitSpec, SyntheticSpec, generate_synthetic, sliding_windows, split_indices, window_count,
)
from sdmix.experiment import run_experiment
from sdmix.margin import boundary_distance_linear
from sdmix.model import ActivityNet, ArchSpec
from sdmix.semantics import make_rng, sample_lambda, semantic_factor
from sdmix.training import ModelConfig, TrainConfig, fit

from gradcheck import PRIMITIVES, REL_TOL, STEP, check_op, random_case, rel_error
from oracles import affine_ratio, grid_boundary_distance, near_boundary_instance


@pytest.fixture
def verdict(capsys, request):
    """Print one PASS/FAIL line for the criterion, then assert."""
    start = time.perf_counter()

    def report(number, title, ok, detail, budget=None):
        elapsed = time.perf_counter() - start
        in_time = budget is None or elapsed < budget
        status = "PASS" if ok and in_time else "FAIL"
        timing = f"{elapsed:.1f}s" + (f" of {budget:.0f}s" if budget else "")
        with capsys.disabled():
            print(f"\n[acceptance {number}] {status}  {title}: {detail} ({timing})")
        assert ok, detail
        assert in_time, f"runtime {elapsed:.1f}s exceeds {budget}s"

    return report


# 1 ---------------------------------------------------------------------------------


def _random_net(rng):
    cin = int(rng.integers(1, 3))
    k = int(rng.integers(2, 4))
    L = int(rng.integers(4 * k + 2, 4 * k + 8))
    arch = ArchSpec((cin, 1, L), k, (int(rng.integers(1, 3)), int(rng.integers(1, 3))), int(rng.integers(2, 4)))
    return ActivityNet.init(arch, int(rng.integers(0, 2 ** 31))), arch


def _net_worst_error(rng):
    net, arch = _random_net(rng)
    n = int(rng.integers(2, 4))
    x = rng.standard_normal((n,) + arch.input_shape)
    probe = rng.standard_normal((n, arch.num_classes))

    def out(params, xv, training):
        saved = net.params
        net.params = params
        try:
            z = net.features(xv, training=training, update_stats=False)
            return float((probe * net.classify(z).value).sum())
        finally:
            net.params = saved

    # Parameter gradients are compared as one vector per objective: conv biases
    # ahead of training-mode batchnorm have an identically zero gradient, for
    # which a per-tensor relative error would only measure roundoff.
    worst = 0.0
    for training in (True, False):
        tape = Tape()
        bound = net.bind(tape)
        xt = tape.leaf(x)
        if training:
            scores = net.classify(net.features(xt, training=True, bound=bound, update_stats=False), bound)
        else:
            scores = net.logits(xt, training=False, bound=bound)
        grads = tape.backward(ad.total(ad.scale(scores, probe)))
        analytic, numeric = [], []
        for name, t in bound.items():
            def f(v, name=name):
                return out({**net.params, name: v}, x, training)

            analytic.append(grads[t.node_id].ravel())
            numeric.append(finite_difference(f, net.params[name], STEP).ravel())
        worst = max(worst, rel_error(np.concatenate(analytic), np.concatenate(numeric)))
        worst = max(worst, rel_error(grads[xt.node_id],
                                     finite_difference(lambda v: out(net.params, v, training), x, STEP)))
    return worst


def test_criterion_1_gradient_correctness(verdict):
    worst = {}
    for kind in PRIMITIVES:
        w = 0.0
        for seed in range(100):
            rng = np.random.default_rng([seed, PRIMITIVES.index(kind), 1])
            op, arrays = random_case(kind, rng)
            w = max(w, check_op(op, arrays, rng))
        worst[kind] = w
    net_worst = max(_net_worst_error(np.random.default_rng([seed, 99])) for seed in range(100))
    worst["ActivityNet"] = net_worst
    top = max(worst, key=worst.get)
    verdict(1, "gradient correctness", max(worst.values()) < REL_TOL,
            f"{len(PRIMITIVES)} primitives + full network x 100 configs, worst rel err "
            f"{worst[top]:.2e} ({top}) < {REL_TOL:g}", budget=60)


# 2 ---------------------------------------------------------------------------------


def test_criterion_2_semantic_factor_algebra(verdict):
    rng = np.random.default_rng(2)
    n = 100_000
    lam = rng.uniform(0, 1, n)
    r1 = 10 ** rng.uniform(-6, 6, n)
    r2 = 10 ** rng.uniform(-6, 6, n)
    k = 10 ** rng.uniform(0, 3, n)
    s = 10 ** rng.uniform(-3, 3, n)
    fails = {"equal": 0, "range": 0, "monotone": 0, "scale": 0}
    for i in range(n):
        t = semantic_factor(lam[i], r1[i], r2[i])
        fails["equal"] += int(semantic_factor(lam[i], r1[i], r1[i]) != lam[i])
        fails["range"] += int(not 0.0 <= t <= 1.0)
        fails["monotone"] += int(semantic_factor(lam[i], k[i] * r1[i], r2[i]) < t)
        fails["scale"] += int(abs(semantic_factor(lam[i], s[i] * r1[i], s[i] * r2[i]) - t) > 1e-12)
    verdict(2, "semantic-factor algebra", not any(fails.values()),
            f"{n} triples, violations {fails}", budget=5)


# 3 ---------------------------------------------------------------------------------


def test_criterion_3_reduction_chain(verdict):
    doms = generate_synthetic(SyntheticSpec(num_domains=3, channels=2, window_len=16, windows_per_class=10), 0)
    small = ModelConfig(kernel_width=3, channels_per_block=(3, 4))
    results = {}
    for pair in (("vanilla_mixup", "sdmix_semantic_only"), ("sdmix_margin_only", "sdmix_full")):
        traces = []
        for alg in pair:
            losses = []
            cfg = TrainConfig(algorithm=alg, max_epochs=25, batch_per_domain=8, constant_range=1.0, seed=5)
            fit(cfg, doms, holdout_domain=2, model=small, step_hook=lambda s, b, loss: losses.append(loss))
            traces.append(losses)
        results[pair] = (len(traces[0]), traces[0] == traces[1])
    ok = all(n >= 50 and same for n, same in results.values())
    detail = "; ".join(f"{b} vs {a}: {n} steps {'identical' if same else 'DIFFER'}"
                       for (a, b), (n, same) in results.items())
    verdict(3, "reduction chain", ok, detail, budget=30)


# 4 ---------------------------------------------------------------------------------


def test_criterion_4_margin_affine_exactness(verdict):
    rng = np.random.default_rng(4)
    worst_exact = worst_grid = 0.0
    for _ in range(1000):
        W, b, x, c, y = near_boundary_instance(rng)
        closed = boundary_distance_linear(W, b, x, c, y)
        signed = ((W[c] - W[y]) @ x + b[c] - b[y]) / np.linalg.norm(W[c] - W[y])
        ratio = affine_ratio(W, b, x, c, y)
        worst_exact = max(worst_exact, abs(ratio - signed), abs(abs(ratio) - closed))
        worst_grid = max(worst_grid, abs(grid_boundary_distance(W, b, x, c, y) - closed))
    verdict(4, "margin affine exactness", worst_exact <= 1e-10 and worst_grid <= 2e-3,
            f"1000 instances, ratio vs closed form {worst_exact:.1e} <= 1e-10, "
            f"grid (1e-3) vs closed form {worst_grid:.1e} <= 2e-3", budget=60)


# 5 ---------------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_5_semantic_inconsistency_benchmark(verdict):
    res = run_benchmark(seeds=range(5))
    wins = res.wins("sdmix_full", "vanilla_mixup")
    gain = 100 * (res.mean("sdmix_full") - res.mean("deepall"))
    accs = ", ".join(f"{a} {100 * res.mean(a):.2f}%" for a in res.accuracies)
    verdict(5, "synthetic semantic-inconsistency benchmark", wins >= 4 and gain >= 2.0,
            f"sdmix_full >= vanilla_mixup in {wins}/5 seeds, +{gain:.2f} points over deepall ({accs})",
            budget=300)


# 6 ---------------------------------------------------------------------------------


def test_criterion_6_protocol_fidelity(verdict):
    rng = np.random.default_rng(6)
    count_fail = 0
    for _ in range(500):
        T = int(rng.integers(1, 400))
        L = int(rng.integers(1, 80))
        stride = int(rng.integers(1, L + 1))
        overlap = 1 - stride / L
        brute = len(range(0, T - L + 1, stride))
        count_fail += window_count(T, L, overlap) != brute
        if L <= T:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                count_fail += len(sliding_windows(SensorSeries(np.zeros((T, 1)), np.zeros(T), 0), L, overlap)) != brute

    strat_fail = 0
    for seed in range(50):
        counts = rng.integers(5, 40, size=3)
        y = np.repeat(np.arange(3), counts)
        tr, va = split_indices(y, SplitSpec(0.8, seed=seed))
        tr2, va2 = split_indices(y, SplitSpec(0.8, seed=seed))
        expect = np.round(0.8 * counts).astype(int)
        strat_fail += not (np.array_equal(np.bincount(y[tr], minlength=3), expect)
                           and np.array_equal(tr, tr2) and np.array_equal(va, va2)
                           and len(set(tr) | set(va)) == len(y) and not set(tr) & set(va))

    doms = generate_synthetic(SyntheticSpec(num_domains=3, channels=2, window_len=16, windows_per_class=8), 1)
    accesses = {}
    for alg in ("sdmix_full", "deepall"):
        for target in (0, 2):
            fresh = [type(d)(d.domain_id, *d.arrays()) for d in doms]
            fit(TrainConfig(algorithm=alg, max_epochs=2, batch_per_domain=8), fresh, holdout_domain=target,
                model=ModelConfig(kernel_width=3, channels_per_block=(2, 3)))
            accesses[(alg, target)] = fresh[target].access_count
    ok = count_fail == 0 and strat_fail == 0 and not any(accesses.values())
    verdict(6, "protocol fidelity", ok,
            f"window-count mismatches {count_fail}/500, stratification/determinism failures {strat_fail}/50, "
            f"held-out accesses {sum(accesses.values())} over {len(accesses)} fits", budget=10)


# 7 ---------------------------------------------------------------------------------

DETERMINISM_CONFIG = """
[synthetic]
num_domains = 3
channels = 2
window_len = 16
windows_per_class = 10
seed = 2

[model]
kernel_width = 3
channels = 3, 4

[train]
max_epochs = 3
batch_per_domain = 8

[experiment]
algorithms = vanilla_mixup, sdmix_full
seeds = 0, 1
figures = false
"""


def test_criterion_7_end_to_end_determinism(verdict, tmp_path):
    cfg = tmp_path / "config.ini"
    cfg.write_text(DETERMINISM_CONFIG)
    run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b")
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*")
                   if p.suffix in (".csv", ".ckpt"))
    compared = [f for f in files if f.name == "metrics.csv" or f.suffix == ".ckpt"]
    differ = [str(f) for f in compared if (tmp_path / "a" / f).read_bytes() != (tmp_path / "b" / f).read_bytes()]
    verdict(7, "end-to-end determinism", bool(compared) and not differ,
            f"{len(compared)} metrics/checkpoint files byte-identical across two runs" if not differ
            else f"differing files: {differ}")


# 8 ---------------------------------------------------------------------------------


def test_criterion_8_beta_sampler(verdict):
    rng = make_rng(8)
    draws = np.array([sample_lambda(1.0, rng) for _ in range(100_000)])
    p = stats.kstest(draws, "uniform").pvalue
    means = {}
    for alpha in (0.1, 0.2, 0.5, 1.0, 10.0):
        r = make_rng(80 + int(alpha * 10))
        means[alpha] = float(np.mean([sample_lambda(alpha, r) for _ in range(100_000)]))
    ok = p > 0.01 and all(abs(m - 0.5) <= 0.01 for m in means.values())
    verdict(8, "Beta sampler", ok,
            f"alpha=1 KS p={p:.3f} > 0.01; means " + ", ".join(f"{a:g}:{m:.4f}" for a, m in means.items()))
