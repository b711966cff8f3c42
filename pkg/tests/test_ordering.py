import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from comparator.data import Dataset, Sample, Subject
from comparator.losses import comparator_batch_loss
from comparator.ordering import (
    LabelChannel,
    OrderingSystem,
    active_pairs,
    chronology_channel,
    normalize_channel,
)

DIAG = OrderingSystem("diagnosis", "diagnosis")
SPEECH = OrderingSystem("speech", "integer_scale", "lower_is_more_severe")


def toy_dataset(spec):
    """``spec`` maps subject id to (diagnosis, [days])."""
    samples, subjects = [], []
    for sid, (dx, days) in spec.items():
        subjects.append(Subject(sid, dx))
        for k, d in enumerate(days):
            samples.append(Sample(f"{sid}_{k}", sid, float(d), np.zeros(2),
                                  {"diagnosis": int(dx == "MND")}))
    return Dataset(samples, subjects, [DIAG], 2)


def test_diagnosis_unchanged():
    assert normalize_channel([0, 1, 1, 0], DIAG).as_optional() == [0, 1, 1, 0]


def test_speech_direction_flip():
    ch = normalize_channel([4, 0], SPEECH)
    assert ch.as_optional() == [-4, 0]
    assert ch.values[1] > ch.values[0]


def test_missing_stays_missing():
    assert normalize_channel([None, 3, float("nan")], SPEECH).as_optional() == [None, -3, None]


def test_non_integral_rejected():
    with pytest.raises(ValueError, match="non-integral"):
        normalize_channel([1, 2.5], DIAG)


def test_chronology_days_are_ordinals():
    ch = chronology_channel(toy_dataset({"A": ("MND", [0, 90, 200])}))
    assert ch.as_optional() == [0, 90, 200]


def test_chronology_single_assessment_has_no_pairs():
    ch = chronology_channel(toy_dataset({"A": ("MND", [0])}))
    assert active_pairs(ch)[0] == 0


def test_chronology_pairs_within_subject_only():
    ds = toy_dataset({"A": ("MND", [0, 50]), "B": ("MND", [0, 60])})
    ch = chronology_channel(ds)
    n, pairs = active_pairs(ch)
    assert n == 2 and list(pairs) == [(0, 1), (2, 3)]
    assert comparator_batch_loss(np.zeros(4), ch).n_pairs == 2


def test_chronology_excludes_controls():
    ds = toy_dataset({"A": ("HC", [0, 50]), "B": ("MND", [0, 60])})
    ch = chronology_channel(ds)
    assert ch.as_optional()[:2] == [None, None]
    assert active_pairs(ch)[0] == 1
    assert active_pairs(chronology_channel(ds, restrict_to=None))[0] == 2


def test_active_pair_counts():
    assert active_pairs(normalize_channel([None] * 4, DIAG))[0] == 0
    assert active_pairs(normalize_channel([0, 1, 0, 1], DIAG))[0] == 6
    assert active_pairs(normalize_channel([None, 1, None, 0, None], DIAG))[0] == 1


def test_active_pairs_with_batch_indices():
    ch = normalize_channel([0, None, 1, 2], DIAG)
    n, pairs = active_pairs(ch, [3, 3, 1])
    assert n == 1 and list(pairs) == [(0, 1)]


def test_ordering_validation():
    with pytest.raises(ValueError):
        OrderingSystem("x", kind="nominal")
    with pytest.raises(ValueError):
        OrderingSystem("x", direction="sideways")
    with pytest.raises(ValueError):
        OrderingSystem("x", weight=0.0)
    assert OrderingSystem.from_dict(SPEECH.to_dict()) == SPEECH


def test_channel_shape_validation():
    with pytest.raises(ValueError):
        LabelChannel(DIAG, [0, 1], [True])


labels = st.lists(st.one_of(st.none(), st.integers(-5, 5)), min_size=2, max_size=10)


@given(labels)
def test_idempotent_for_higher_is_more_severe(raw):
    once = normalize_channel(raw, DIAG).as_optional()
    assert normalize_channel(once, DIAG).as_optional() == once


@given(labels)
def test_order_preservation(raw):
    ch = normalize_channel(raw, SPEECH).as_optional()
    for i, a in enumerate(raw):
        for j, b in enumerate(raw):
            if a is not None and b is not None:
                # lower raw score means more severe
                assert np.sign(ch[i] - ch[j]) == np.sign(b - a)


@given(labels, st.lists(st.floats(-3, 3), min_size=10, max_size=10))
def test_pairs_match_loss_terms(raw, scores):
    ch = normalize_channel(raw, DIAG)
    s = np.array(scores[: len(raw)])
    n, pairs = active_pairs(ch)
    # every enumerated pair, and only those, can carry loss
    expected = 0
    for i, j in pairs:
        a, b = ch.values[i], ch.values[j]
        if a != b:
            lo, hi = (i, j) if b > a else (j, i)
            expected += max(s[lo] - s[hi] + 1.0, 0.0)
    bl = comparator_batch_loss(s, ch)
    assert bl.n_pairs == n
    assert bl.loss == pytest.approx(expected, abs=1e-12)
