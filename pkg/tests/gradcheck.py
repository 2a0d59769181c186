"""Finite-difference comparison helpers shared by the gradient tests."""

import numpy as np

from sdmix import autodiff as ad
from sdmix.autodiff import Tape, finite_difference

STEP = 1e-5
REL_TOL = 1e-4


def rel_error(analytic, numeric) -> float:
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), 1e-6)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


def check_op(op, arrays, rng, diff=None):
    """Max relative error between tape and central differences for ``sum(r * op(*arrays))``.

    ``diff`` selects which argument positions are differentiated (default: all).
    """
    diff = range(len(arrays)) if diff is None else diff
    probe = None

    def scalar(args):
        nonlocal probe
        out = op(*args).value
        if probe is None:
            probe = rng.standard_normal(out.shape)
        return float((probe * out).sum())

    scalar(arrays)
    tape = Tape()
    leaves = [tape.leaf(a) if i in diff else a for i, a in enumerate(arrays)]
    loss = ad.total(ad.scale(op(*leaves), probe))
    grads = tape.backward(loss)
    worst = 0.0
    for i in diff:
        def f(x, i=i):
            args = list(arrays)
            args[i] = x
            return scalar(args)

        numeric = finite_difference(f, arrays[i], STEP)
        worst = max(worst, rel_error(grads[leaves[i].node_id], numeric))
    return worst


def random_case(kind, rng):
    n = int(rng.integers(1, 4))
    if kind == "conv_h1":
        cin, cout, k = (int(v) for v in rng.integers(1, 4, size=3))
        L = k + int(rng.integers(0, 6))
        return ad.conv_h1, [rng.standard_normal((n, cin, 1, L)), rng.standard_normal((cout, cin, 1, k)),
                            rng.standard_normal(cout)]
    if kind == "maxpool_h1":
        return ad.maxpool_h1, [rng.standard_normal((n, int(rng.integers(1, 3)), 1, int(rng.integers(2, 9))))]
    if kind == "batchnorm_train":
        c = int(rng.integers(1, 4))
        return (lambda x, s, b: ad.batchnorm(x, s, b, training=True),
                [rng.standard_normal((n + 1, c, 1, int(rng.integers(2, 6)))), rng.standard_normal(c),
                 rng.standard_normal(c)])
    if kind == "batchnorm_eval":
        c = int(rng.integers(1, 4))
        rm, rv = rng.standard_normal(c), rng.uniform(0.5, 2.0, c)
        return (lambda x, s, b: ad.batchnorm(x, s, b, training=False, running_mean=rm, running_var=rv),
                [rng.standard_normal((n, c, 1, 4)), rng.standard_normal(c), rng.standard_normal(c)])
    if kind == "relu":
        return ad.relu, [rng.standard_normal((n, 5))]
    if kind == "linear":
        d, k = (int(v) for v in rng.integers(1, 5, size=2))
        return ad.linear, [rng.standard_normal((n, d)), rng.standard_normal((k, d)), rng.standard_normal(k)]
    if kind == "add":
        return ad.add, [rng.standard_normal((n, 3)), rng.standard_normal(3)]
    if kind == "scale":
        f = rng.standard_normal()
        return (lambda x: ad.scale(x, f)), [rng.standard_normal((n, 3))]
    if kind == "mix":
        lam = rng.uniform(size=n)
        return (lambda a, b: ad.mix(a, b, lam)), [rng.standard_normal((n, 4)), rng.standard_normal((n, 4))]
    if kind == "log_softmax":
        return ad.log_softmax, [rng.standard_normal((n, 4))]
    if kind == "pick":
        cols = rng.integers(0, 4, size=n)
        return (lambda x: ad.pick(x, cols)), [rng.standard_normal((n, 4))]
    if kind == "sub":
        return ad.sub, [rng.standard_normal((n, 3)), rng.standard_normal((n, 1))]
    if kind == "mul":
        return ad.mul, [rng.standard_normal((n, 3)), rng.standard_normal(3)]
    if kind == "reshape":
        return (lambda x: ad.reshape(x, (n, 6))), [rng.standard_normal((n, 2, 1, 3))]
    if kind == "rows":
        idx = rng.integers(0, n + 2, size=int(rng.integers(1, 5)))
        return (lambda x: ad.rows(x, idx)), [rng.standard_normal((n + 2, 3))]
    if kind == "total":
        axis = int(rng.integers(0, 2))
        return (lambda x: ad.total(x, axis=axis)), [rng.standard_normal((n, 3))]
    if kind == "mean":
        return ad.mean, [rng.standard_normal((n, 3))]
    raise AssertionError(kind)


PRIMITIVES = ["conv_h1", "maxpool_h1", "batchnorm_train", "batchnorm_eval", "relu", "linear", "add",
              "sub", "mul", "scale", "mix", "reshape", "rows", "pick", "total", "mean", "log_softmax"]
