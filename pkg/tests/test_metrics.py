import numpy as np
import pytest

from convemo.autodiff import UsageError
from convemo.metrics import (
    accuracy,
    build_report,
    confusion_matrix,
    macro_f1,
    micro_f1_excluding,
    per_class_prf,
    weighted_f1,
)

from reference import (
    macro_f1_oracle,
    micro_excluding_oracle,
    prf_oracle,
    weighted_f1_oracle,
)


def test_perfect_predictions_score_one():
    labels = [0, 1, 2, 1, 0]
    assert weighted_f1(labels, labels, 3) == 1.0
    assert macro_f1(labels, labels, 3) == 1.0
    assert micro_f1_excluding(labels, labels, 3, []) == 1.0
    assert accuracy(labels, labels) == 1.0


def test_hand_computed_example():
    # labels [0,0,1], preds [0,1,1]: both classes have F1 = 2/3, so the
    # weighted and macro averages are 2/3 as well.
    labels, preds = [0, 0, 1], [0, 1, 1]
    _, _, f1 = per_class_prf(confusion_matrix(labels, preds, 2))
    assert abs(f1[0] - 2 / 3) < 1e-12
    assert abs(f1[1] - 2 / 3) < 1e-12
    assert abs(weighted_f1(labels, preds, 2) - 2 / 3) < 1e-12
    assert abs(macro_f1(labels, preds, 2) - 2 / 3) < 1e-12


def test_metrics_agree_with_rational_oracle_on_random_cases():
    rng = np.random.Generator(np.random.PCG64(0))
    for _ in range(1000):
        num_classes = int(rng.integers(2, 7))
        n = int(rng.integers(1, 40))
        labels = rng.integers(0, num_classes, size=n).tolist()
        preds = rng.integers(0, num_classes, size=n).tolist()
        assert abs(weighted_f1(labels, preds, num_classes)
                   - float(weighted_f1_oracle(labels, preds, num_classes))) < 1e-12
        assert abs(macro_f1(labels, preds, num_classes)
                   - float(macro_f1_oracle(labels, preds, num_classes))) < 1e-12
        excluded = [k for k in range(num_classes) if rng.random() < 0.25]
        if any(t not in excluded for t in labels):
            assert abs(micro_f1_excluding(labels, preds, num_classes, excluded)
                       - float(micro_excluding_oracle(labels, preds, num_classes,
                                                      excluded))) < 1e-12


def test_per_class_matches_oracle():
    rng = np.random.Generator(np.random.PCG64(1))
    labels = rng.integers(0, 4, size=60).tolist()
    preds = rng.integers(0, 4, size=60).tolist()
    precision, recall, f1 = per_class_prf(confusion_matrix(labels, preds, 4))
    for k, (p, r, f) in enumerate(prf_oracle(labels, preds, 4)):
        assert abs(precision[k] - float(p)) < 1e-12
        assert abs(recall[k] - float(r)) < 1e-12
        assert abs(f1[k] - float(f)) < 1e-12


def test_micro_exclusion_deletion_equivalence():
    # With class 3 ("neutral") excluded and every neutral instance
    # mispredicted, the score equals the same data with neutral rows deleted.
    rng = np.random.Generator(np.random.PCG64(2))
    labels = rng.integers(0, 4, size=200).tolist()
    preds = rng.integers(0, 4, size=200).tolist()
    preds = [(t + 1) % 4 if t == 3 else p for t, p in zip(labels, preds)]
    full = micro_f1_excluding(labels, preds, 4, [3])
    kept = [(t, p) for t, p in zip(labels, preds) if t != 3]
    deleted = micro_f1_excluding([t for t, _ in kept], [p for _, p in kept], 4, [3])
    assert full == deleted


def test_confusion_matrix_row_sums_and_trace():
    rng = np.random.Generator(np.random.PCG64(3))
    labels = rng.integers(0, 3, size=50).tolist()
    preds = rng.integers(0, 3, size=50).tolist()
    confusion = confusion_matrix(labels, preds, 3)
    for k in range(3):
        assert confusion[k].sum() == labels.count(k)
    assert np.trace(confusion) == sum(t == p for t, p in zip(labels, preds))


def test_empty_inputs_are_usage_errors():
    with pytest.raises(UsageError):
        weighted_f1([], [], 2)
    with pytest.raises(UsageError):
        accuracy([], [])
    with pytest.raises(UsageError):
        confusion_matrix([0], [0, 1], 2)


def test_report_fields_consistent():
    rng = np.random.Generator(np.random.PCG64(4))
    labels = rng.integers(0, 3, size=80).tolist()
    preds = rng.integers(0, 3, size=80).tolist()
    report = build_report(labels, preds, ["a", "b", "c"], excluded_names=["c"])
    assert report.support == [labels.count(k) for k in range(3)]
    assert all(0.0 <= f <= 1.0 for f in report.f1)
    assert report.metric("accuracy") == report.accuracy
    assert report.micro_f1 == micro_f1_excluding(labels, preds, 3, [2])
    payload = report.to_dict()
    assert payload["per_class"][2]["name"] == "c"
    assert payload["confusion"] == report.confusion
    with pytest.raises(UsageError):
        report.metric("nope")
