import numpy as np
import pytest

from sdmix.data import DomainDataset
from sdmix.metrics import confusion_matrix, evaluate, metrics_from_confusion
from sdmix.model import ActivityNet, ArchSpec


def test_perfect_predictor():
    y = np.array([0, 1, 2, 2, 1])
    m = metrics_from_confusion(confusion_matrix(y, y, 3))
    assert m.accuracy == 1.0 and m.macro_f1 == 1.0 and m.count == 5
    assert np.array_equal(confusion_matrix(y, y, 3), np.diag([1, 2, 2]))


def test_constant_predictor_on_balanced_set():
    C = 4
    y = np.repeat(np.arange(C), 5)
    m = metrics_from_confusion(confusion_matrix(y, np.zeros_like(y), C))
    assert m.accuracy == pytest.approx(1 / C)
    assert m.recall[0] == 1.0 and m.precision[0] == pytest.approx(1 / C)
    assert np.all(m.f1[1:] == 0.0)


def test_metrics_match_per_sample_tally():
    rng = np.random.default_rng(0)
    C = 5
    y = rng.integers(0, C, 200)
    p = np.where(rng.random(200) < 0.6, y, rng.integers(0, C, 200))
    m = metrics_from_confusion(confusion_matrix(y, p, C))
    correct = 0
    for a, b in zip(y, p):
        correct += int(a == b)
    assert m.accuracy == correct / 200
    for c in range(C):
        tp = sum(1 for a, b in zip(y, p) if a == c and b == c)
        pred = sum(1 for b in p if b == c)
        act = sum(1 for a in y if a == c)
        prec = tp / pred if pred else 0.0
        rec = tp / act if act else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        assert m.precision[c] == pytest.approx(prec, abs=1e-15)
        assert m.recall[c] == pytest.approx(rec, abs=1e-15)
        assert m.f1[c] == pytest.approx(f1, abs=1e-15)
    assert m.macro_f1 == pytest.approx(m.f1.mean(), abs=1e-15)
    cm = confusion_matrix(y, p, C)
    assert np.array_equal(cm.sum(axis=0), np.bincount(p, minlength=C))


def test_evaluate_errors_and_consistency():
    net = ActivityNet.init(ArchSpec((1, 1, 10), 3, (2, 2), 2), 0)
    X = np.random.default_rng(1).standard_normal((6, 1, 1, 10))
    m, cm = evaluate(net, DomainDataset(0, X, np.array([0, 1, 0, 1, 0, 1])))
    assert m.accuracy == pytest.approx(np.trace(cm) / 6)
    with pytest.raises(ValueError, match="empty"):
        evaluate(net, DomainDataset(0, np.zeros((0, 1, 1, 10)), np.zeros(0)))
    with pytest.raises(ValueError, match="class 2"):
        evaluate(net, DomainDataset(0, X, np.array([0, 1, 2, 1, 0, 1])))
