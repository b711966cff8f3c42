"""Datasets: synthetic longitudinal cohorts, file I/O, splits and batching.

The synthetic generator stands in for a clinical speech corpus.  Every
subject has a latent severity trajectory; healthy controls (HC) stay at a
small constant level, motor neuron disease (MND) subjects start higher and
worsen linearly in time.  Features are a fixed noisy nonlinear view of the
latent severity and the integer subscore follows the 0-4 ALSFRS-R item
convention (4 = normal), so it runs opposite to severity.

The latent severity is returned separately from the dataset and is only
ever used for evaluation.
"""
from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .ordering import LabelChannel, OrderingSystem, normalize_channel

DIAGNOSES = ("HC", "MND")
SPLITS = ("train", "validation", "test")
DATASET_FORMAT = "comparator-dataset"
DATASET_VERSION = 1

DIAGNOSIS_ORDERING = OrderingSystem("diagnosis", "diagnosis", "higher_is_more_severe")
SPEECH_ORDERING = OrderingSystem("speech", "integer_scale", "lower_is_more_severe")


class DatasetError(ValueError):
    pass


@dataclass
class Sample:
    sample_id: str
    subject_id: str
    time_days: float
    features: np.ndarray
    raw_labels: dict[str, int | None] = field(default_factory=dict)
    split: str | None = None


@dataclass
class Subject:
    subject_id: str
    diagnosis: str
    assessments: list[tuple[float, list[str]]] = field(default_factory=list)

    @property
    def n_assessments(self) -> int:
        return len(self.assessments)


class Dataset:
    """Subjects, samples and the ordering systems their labels belong to."""

    def __init__(self, samples: Sequence[Sample], subjects: dict[str, Subject] | Sequence[Subject],
                 orderings: Sequence[OrderingSystem], dim: int):
        self.samples = list(samples)
        if not isinstance(subjects, dict):
            subjects = {s.subject_id: s for s in subjects}
        self.subjects = dict(subjects)
        self.orderings = list(orderings)
        self.dim = int(dim)
        self._features: np.ndarray | None = None
        self._index = {s.sample_id: i for i, s in enumerate(self.samples)}
        self._rebuild_assessments()

    def _rebuild_assessments(self) -> None:
        by_subject: dict[str, dict[float, list[str]]] = {k: {} for k in self.subjects}
        for s in self.samples:
            by_subject[s.subject_id].setdefault(float(s.time_days), []).append(s.sample_id)
        for sid, visits in by_subject.items():
            self.subjects[sid].assessments = [(t, visits[t]) for t in sorted(visits)]

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def features(self) -> np.ndarray:
        if self._features is None:
            if self.samples:
                self._features = np.vstack([s.features for s in self.samples])
            else:
                self._features = np.zeros((0, self.dim))
        return self._features

    def ordering(self, name: str) -> OrderingSystem:
        for o in self.orderings:
            if o.name == name:
                return o
        raise KeyError(f"dataset has no ordering system {name!r}")

    def raw_labels(self, name: str) -> list[int | None]:
        return [s.raw_labels.get(name) for s in self.samples]

    def channel(self, name: str) -> LabelChannel:
        return normalize_channel(self.raw_labels(name), self.ordering(name))

    def diagnosis_array(self) -> np.ndarray:
        """1 for MND samples, 0 for HC samples."""
        return np.array([self.subjects[s.subject_id].diagnosis == "MND" for s in self.samples],
                        dtype=np.int64)

    def time_array(self) -> np.ndarray:
        return np.array([s.time_days for s in self.samples], dtype=np.float64)

    def subject_array(self) -> np.ndarray:
        return np.array([s.subject_id for s in self.samples])

    def split_indices(self, split: str | None) -> np.ndarray:
        if split is None:
            return np.arange(len(self.samples))
        return np.array([i for i, s in enumerate(self.samples) if s.split == split], dtype=np.int64)

    def subset(self, split: str) -> "Dataset":
        idx = self.split_indices(split)
        samples = [self.samples[i] for i in idx]
        keep = {s.subject_id for s in samples}
        subjects = {k: Subject(k, v.diagnosis) for k, v in self.subjects.items() if k in keep}
        return Dataset(samples, subjects, self.orderings, self.dim)

    def index_of(self, sample_id: str) -> int:
        return self._index[sample_id]

    def apply_split(self, assignment: dict[str, str]) -> None:
        for s in self.samples:
            s.split = assignment[s.subject_id]

    def summary(self) -> dict:
        per_class = Counter(s.diagnosis for s in self.subjects.values())
        counts = [s.n_assessments for s in self.subjects.values()]
        splits = Counter(s.split for s in self.samples)
        subject_splits: dict[str, set] = {}
        for s in self.samples:
            subject_splits.setdefault(str(s.split), set()).add(s.subject_id)
        return {
            "subjects": dict(sorted(per_class.items())),
            "samples": len(self.samples),
            "assessments_per_subject": {
                "min": min(counts) if counts else 0,
                "median": float(np.median(counts)) if counts else 0.0,
                "max": max(counts) if counts else 0,
                "histogram": dict(sorted(Counter(counts).items())),
            },
            "samples_per_split": {str(k): v for k, v in sorted(splits.items(), key=str)},
            "subjects_per_split": {k: len(v) for k, v in sorted(subject_splits.items())},
        }


# --------------------------------------------------------------------------
# synthetic cohort


@dataclass
class CohortConfig:
    n_hc: int = 170
    n_mnd: int = 103
    # assessments per subject: 1 + Poisson(lam), lam ~ Gamma(shape, mean/shape)
    extra_assessments_mean: float = 2.0
    extra_assessments_shape: float = 1.0
    max_assessments: int = 12
    gap_days_min: float = 30.0
    gap_days_mean: float = 120.0
    recordings_per_assessment: int = 4
    dim: int = 32
    hc_severity_low: float = 0.0
    hc_severity_high: float = 1.0
    mnd_severity_low: float = 0.8
    mnd_severity_high: float = 3.0
    # latent severity units per day
    mnd_rate_mean: float = 1.2 / 365.0
    mnd_rate_shape: float = 4.0
    sigma_obs: float = 0.75
    sigma_lab: float = 0.5
    sigma_subject: float = 0.0
    label_hc_subscores: bool = False
    validation_fraction: float = 0.12
    seed: int = 1

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        for name in ("n_hc", "n_mnd", "recordings_per_assessment", "dim", "max_assessments"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"cohort.{name} must be >= 1")
        for name in ("sigma_obs", "sigma_lab", "sigma_subject", "extra_assessments_mean",
                     "gap_days_min", "mnd_rate_mean"):
            if not float(getattr(self, name)) >= 0:
                raise ValueError(f"cohort.{name} must be >= 0")
        for name in ("extra_assessments_shape", "mnd_rate_shape"):
            if not float(getattr(self, name)) > 0:
                raise ValueError(f"cohort.{name} must be > 0")
        if self.gap_days_mean < self.gap_days_min or self.gap_days_mean <= 0:
            raise ValueError("cohort.gap_days_mean must be positive and >= gap_days_min")
        if self.hc_severity_high < self.hc_severity_low:
            raise ValueError("cohort.hc_severity_high must be >= hc_severity_low")
        if self.mnd_severity_high < self.mnd_severity_low:
            raise ValueError("cohort.mnd_severity_high must be >= mnd_severity_low")
        if not 0 <= self.validation_fraction < 1:
            raise ValueError("cohort.validation_fraction must be in [0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "CohortConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, value in d.items():
            if key not in known:
                raise ValueError(f"unknown cohort field {key!r}")
            kwargs[key] = type(getattr(cls, key))(value)
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return asdict(self)


def observation_features(severity, A: np.ndarray) -> np.ndarray:
    """Noise-free features ``A @ phi(s)`` for an array of severities."""
    s = np.atleast_1d(np.asarray(severity, dtype=np.float64))
    phi = np.stack([s, np.tanh(s - 2.0), 0.1 * s * s], axis=1)
    return phi @ A.T


def subscore_from_severity(severity, noise=0.0):
    """0-4 item score: ``clip(round(4 - s + noise), 0, 4)``."""
    return np.clip(np.rint(4.0 - np.asarray(severity) + noise), 0, 4).astype(np.int64)


def generate_cohort(cfg: CohortConfig) -> tuple[Dataset, np.ndarray]:
    """Simulate a cohort.

    Returns
    -------
    dataset : Dataset
        With the decile split already applied.
    latent : ndarray, shape (n_samples,)
        Ground-truth severity of every sample; evaluation only.
    """
    cfg.validate()
    ss = np.random.SeedSequence(cfg.seed)
    map_seq, subj_seq, noise_seq, split_seq = ss.spawn(4)
    map_rng = np.random.default_rng(map_seq)
    A = map_rng.standard_normal((cfg.dim, 3)) / np.sqrt(3.0)
    B = map_rng.standard_normal((cfg.dim, 4)) / 2.0
    rng = np.random.default_rng(subj_seq)
    noise = np.random.default_rng(noise_seq)

    diagnoses = np.array(["HC"] * cfg.n_hc + ["MND"] * cfg.n_mnd)
    diagnoses = diagnoses[rng.permutation(diagnoses.size)]
    width = max(4, len(str(diagnoses.size)))

    samples: list[Sample] = []
    subjects: list[Subject] = []
    latent: list[float] = []
    for k, diagnosis in enumerate(diagnoses):
        sid = f"S{k:0{width}d}"
        lam = rng.gamma(cfg.extra_assessments_shape,
                        cfg.extra_assessments_mean / cfg.extra_assessments_shape)
        n_assess = 1 + min(int(rng.poisson(lam)), cfg.max_assessments - 1)
        gap_scale = (cfg.gap_days_mean - cfg.gap_days_min) / 2.0
        gaps = cfg.gap_days_min + (rng.gamma(2.0, gap_scale, n_assess - 1) if gap_scale > 0
                                   else np.zeros(n_assess - 1))
        times = np.concatenate([[0.0], np.cumsum(np.maximum(np.rint(gaps), 1.0))])
        if diagnosis == "MND":
            s0 = rng.uniform(cfg.mnd_severity_low, cfg.mnd_severity_high)
            rate = (rng.gamma(cfg.mnd_rate_shape, cfg.mnd_rate_mean / cfg.mnd_rate_shape)
                    if cfg.mnd_rate_mean > 0 else 0.0)
        else:
            s0 = rng.uniform(cfg.hc_severity_low, cfg.hc_severity_high)
            rate = 0.0
        speaker = B @ rng.standard_normal(B.shape[1]) * cfg.sigma_subject
        subjects.append(Subject(sid, str(diagnosis)))
        for a, t in enumerate(times):
            sev = s0 + rate * t
            subscore = int(subscore_from_severity(sev, noise.normal(0.0, cfg.sigma_lab)
                                                  if cfg.sigma_lab > 0 else 0.0))
            labels: dict[str, int | None] = {"diagnosis": int(diagnosis == "MND")}
            if diagnosis == "MND" or cfg.label_hc_subscores:
                labels["speech"] = subscore
            clean = observation_features(sev, A)[0] + speaker
            for r in range(cfg.recordings_per_assessment):
                x = clean + (noise.normal(0.0, cfg.sigma_obs, cfg.dim) if cfg.sigma_obs > 0
                             else 0.0)
                samples.append(Sample(f"{sid}_a{a:02d}_r{r}", sid, float(t), np.asarray(x, dtype=np.float64),
                                      dict(labels)))
                latent.append(float(sev))
    ds = Dataset(samples, subjects, [DIAGNOSIS_ORDERING, SPEECH_ORDERING], cfg.dim)
    seed = int(np.random.default_rng(split_seq).integers(2**31))
    ds.apply_split(split_by_assessment_decile(ds.subjects.values(), cfg.validation_fraction, seed))
    return ds, np.array(latent)


def split_by_assessment_decile(
    subjects, validation_fraction: float = 0.12, seed: int = 0
) -> dict[str, str]:
    """Hold out the top decile of subjects by number of assessments.

    Subjects are sorted by assessment count (descending, ties by
    ``subject_id``) and the first ``n // 10`` go to test.  A
    ``validation_fraction`` of the rest, drawn per diagnosis group with a
    seeded shuffle, goes to validation; the remainder trains.
    """
    subjects = list(subjects)
    if len(subjects) < 3:
        raise ValueError(f"need at least 3 subjects to split, got {len(subjects)}")
    ranked = sorted(subjects, key=lambda s: (-s.n_assessments, s.subject_id))
    n_test = max(1, len(ranked) // 10)
    assignment = {s.subject_id: "test" for s in ranked[:n_test]}
    rest = sorted(ranked[n_test:], key=lambda s: s.subject_id)
    rng = np.random.default_rng(seed)
    for diagnosis in sorted({s.diagnosis for s in rest}):
        group = [s for s in rest if s.diagnosis == diagnosis]
        order = rng.permutation(len(group))
        n_val = int(round(validation_fraction * len(group)))
        for rank, i in enumerate(order):
            assignment[group[i].subject_id] = "validation" if rank < n_val else "train"
    return assignment


# --------------------------------------------------------------------------
# file format


def _sample_record(s: Sample) -> dict:
    rec = {"record": "sample", "sample_id": s.sample_id, "subject_id": s.subject_id,
           "time_days": float(s.time_days)}
    if s.split is not None:
        rec["split"] = s.split
    rec["labels"] = {k: v for k, v in s.raw_labels.items() if v is not None}
    rec["features"] = [float(v) for v in s.features]
    return rec


def save_dataset(dataset: Dataset, path) -> Path:
    """Write ``dataset`` as UTF-8 JSON lines: header, subjects, samples."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {"record": "header", "format": DATASET_FORMAT, "version": DATASET_VERSION,
              "dim": dataset.dim, "orderings": [o.to_dict() for o in dataset.orderings]}
    lines = [json.dumps(header)]
    for sid in sorted(dataset.subjects):
        lines.append(json.dumps({"record": "subject", "subject_id": sid,
                                 "diagnosis": dataset.subjects[sid].diagnosis}))
    lines.extend(json.dumps(_sample_record(s)) for s in dataset.samples)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def truth_path(dataset_path) -> Path:
    p = Path(dataset_path)
    return p.with_name(p.stem + ".truth.jsonl")


def save_truth(dataset: Dataset, latent, path) -> Path:
    path = Path(path)
    lines = [json.dumps({"sample_id": s.sample_id, "latent_severity": float(v)})
             for s, v in zip(dataset.samples, latent)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def load_truth(dataset: Dataset, path) -> np.ndarray:
    out = np.full(len(dataset), np.nan)
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        rec = json.loads(line)
        try:
            out[dataset.index_of(rec["sample_id"])] = float(rec["latent_severity"])
        except KeyError as exc:
            raise DatasetError(f"{path}:{lineno}: unknown sample {exc}") from None
    return out


def _fail(path, lineno, msg):
    raise DatasetError(f"{path}:{lineno}: {msg}")


def load_dataset(path) -> Dataset:
    """Read and validate a dataset file written by :func:`save_dataset`."""
    path = Path(path)
    header = None
    subjects: dict[str, Subject] = {}
    samples: list[Sample] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                _fail(path, lineno, f"invalid JSON ({exc.msg})")
            if not isinstance(rec, dict):
                _fail(path, lineno, "record is not an object")
            kind = rec.get("record")
            if header is None:
                if kind != "header" or rec.get("format") != DATASET_FORMAT:
                    _fail(path, lineno, "first record must be a dataset header")
                if rec.get("version") != DATASET_VERSION:
                    _fail(path, lineno, f"unsupported dataset version {rec.get('version')}")
                try:
                    orderings = [OrderingSystem.from_dict(o) for o in rec.get("orderings", [])]
                    dim = int(rec["dim"])
                except (KeyError, TypeError, ValueError) as exc:
                    _fail(path, lineno, f"bad header: {exc}")
                header = (orderings, dim)
                continue
            if kind == "subject":
                try:
                    sid, diagnosis = str(rec["subject_id"]), rec["diagnosis"]
                except KeyError as exc:
                    _fail(path, lineno, f"subject record missing field {exc}")
                if diagnosis not in DIAGNOSES:
                    _fail(path, lineno, f"subject {sid}: unknown diagnosis {diagnosis!r}")
                subjects[sid] = Subject(sid, diagnosis)
            elif kind == "sample":
                samples.append(_parse_sample(path, lineno, rec, header, seen))
            else:
                _fail(path, lineno, f"unknown record type {kind!r}")
    if header is None:
        raise DatasetError(f"{path}: empty dataset file")
    orderings, dim = header
    names = {o.name for o in orderings}
    if len(names) != len(orderings):
        raise DatasetError(f"{path}: duplicate ordering names in header")
    for s in samples:
        if s.subject_id not in subjects:
            dx = s.raw_labels.get("diagnosis")
            if dx is None:
                raise DatasetError(f"{path}: sample {s.sample_id}: unknown subject {s.subject_id}")
            subjects[s.subject_id] = Subject(s.subject_id, DIAGNOSES[int(dx)])
    splits: dict[str, str | None] = {}
    for s in samples:
        if splits.setdefault(s.subject_id, s.split) != s.split:
            raise DatasetError(f"{path}: subject {s.subject_id} spans several splits")
    return Dataset(samples, subjects, orderings, dim)


def _parse_sample(path, lineno, rec, header, seen) -> Sample:
    orderings, dim = header
    try:
        sample_id = str(rec["sample_id"])
        subject_id = str(rec["subject_id"])
        time_days = float(rec["time_days"])
        feats = rec["features"]
    except (KeyError, TypeError, ValueError) as exc:
        _fail(path, lineno, f"sample record: missing or bad field {exc}")
    if sample_id in seen:
        _fail(path, lineno, f"duplicate sample_id {sample_id!r}")
    seen.add(sample_id)
    if not math.isfinite(time_days) or time_days < 0:
        _fail(path, lineno, f"sample {sample_id}: time_days must be finite and >= 0")
    try:
        x = np.asarray(feats, dtype=np.float64)
    except (TypeError, ValueError):
        _fail(path, lineno, f"sample {sample_id}: features are not numeric")
    if x.shape != (dim,):
        _fail(path, lineno, f"sample {sample_id}: expected {dim} features, got {x.size}")
    if not np.all(np.isfinite(x)):
        _fail(path, lineno, f"sample {sample_id}: non-finite feature value")
    names = {o.name for o in orderings}
    labels: dict[str, int | None] = {}
    for key, value in (rec.get("labels") or {}).items():
        if names and key not in names:
            _fail(path, lineno, f"sample {sample_id}: label {key!r} has no ordering system")
        if value is None:
            labels[key] = None
            continue
        if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value):
            _fail(path, lineno, f"sample {sample_id}: label {key!r} is not an integer")
        labels[key] = int(value)
    split = rec.get("split")
    if split is not None and split not in SPLITS:
        _fail(path, lineno, f"sample {sample_id}: unknown split {split!r}")
    return Sample(sample_id, subject_id, time_days, x, labels, split)


# --------------------------------------------------------------------------
# batching


class BatchSampler:
    """Deterministic stream of index batches drawn from ``indices``.

    Batch ``k`` depends only on ``(seed, k)``, so a stream can be resumed at
    any position.  ``mode="uniform"`` samples with replacement;
    ``mode="subject"`` draws subjects uniformly and then
    ``samples_per_subject`` of each subject's samples, which guarantees
    within-subject pairs for chronology channels.
    """

    def __init__(self, indices, batch_size: int = 96, seed: int = 0, mode: str = "uniform",
                 subject_ids=None, samples_per_subject: int = 4):
        self.indices = np.asarray(indices, dtype=np.int64)
        if self.indices.size == 0:
            raise ValueError("cannot sample batches from an empty split")
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        self.batch_size = int(batch_size)
        self.seed = int(seed)
        self.mode = mode
        if mode == "subject":
            if subject_ids is None:
                raise ValueError("subject sampling needs subject_ids")
            subject_ids = np.asarray(subject_ids)[self.indices]
            groups: dict = {}
            for pos, sid in enumerate(subject_ids):
                groups.setdefault(sid, []).append(pos)
            self._groups = [np.array(groups[k]) for k in sorted(groups)]
            self.samples_per_subject = max(1, min(int(samples_per_subject), self.batch_size))
        elif mode != "uniform":
            raise ValueError(f"unknown sampler mode {mode!r}")

    def batch(self, k: int) -> np.ndarray:
        rng = np.random.default_rng([self.seed, int(k)])
        if self.mode == "uniform":
            return self.indices[rng.integers(0, self.indices.size, self.batch_size)]
        picks = []
        while len(picks) < self.batch_size:
            group = self._groups[rng.integers(len(self._groups))]
            take = min(self.samples_per_subject, self.batch_size - len(picks))
            picks.extend(group[rng.integers(0, group.size, take)])
        return self.indices[np.array(picks)]

    def __iter__(self) -> Iterator[np.ndarray]:
        k = 0
        while True:
            yield self.batch(k)
            k += 1


def batch_sampler(indices, batch_size: int = 96, seed: int = 0, **kwargs) -> Iterator[np.ndarray]:
    return iter(BatchSampler(indices, batch_size, seed, **kwargs))
