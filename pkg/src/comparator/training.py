"""Training runs: configuration, the batch loop, early stopping and replay.

A run directory holds ``manifest.json`` (configuration, seeds, metric
history and the list of saved checkpoints), ``checkpoints/`` with one file
per strict improvement of validation accuracy plus ``best.ckpt``, and
``resume.ckpt`` with the latest optimiser state so an interrupted run can be
continued bit-for-bit.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np

from . import checkpoint as ckpt_io
from .data import BatchSampler, Dataset
from .losses import (
    BatchLoss,
    NRRANK_MODES,
    comparator_batch_loss,
    contrastive_batch_loss,
    cross_entropy_loss,
    multi_ordering_loss,
    nrrank_batch_loss,
    nrrank_score,
    sigmoid,
)
from .metrics import oracle_threshold_accuracy
from .model import ScoringModel, backward, forward
from .optim import AdamState, NumericalError, adam_step
from .ordering import LabelChannel, chronology_channel

log = logging.getLogger(__name__)

LOSS_KINDS = ("comparator", "cross_entropy", "contrastive", "nrrank")
MANIFEST_NAME = "manifest.json"
RESUME_NAME = "resume.ckpt"
RUN_FORMAT = "comparator-run"


@dataclass
class TrainConfig:
    name: str = "proposed"
    loss: str = "comparator"
    channels: list[str] = field(default_factory=lambda: ["diagnosis", "speech"])
    chronology_restrict_to: list[str] = field(default_factory=lambda: ["MND"])
    epsilon: float = 1.0
    contrastive_margin: float = 1.0
    nrrank_mode: str = "mse"
    total_batches: int = 100_000
    batch_size: int = 96
    eval_interval: int = 500
    sampler: str = "uniform"
    samples_per_subject: int = 4
    seed: int = 0
    hidden: list[int] = field(default_factory=lambda: [64])
    activation: str = "tanh"
    standardize: bool = True
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon_num: float = 1e-8

    def __post_init__(self) -> None:
        self.channels = [str(c) for c in self.channels]
        self.hidden = [int(h) for h in self.hidden]
        self.validate()

    def validate(self) -> None:
        if self.loss not in LOSS_KINDS:
            raise ValueError(f"train.loss must be one of {LOSS_KINDS}, got {self.loss!r}")
        if not self.channels:
            raise ValueError("train.channels must name at least one ordering")
        if len(set(self.channels)) != len(self.channels):
            raise ValueError("train.channels contains duplicates")
        if self.loss in ("cross_entropy", "contrastive") and self.channels != ["diagnosis"]:
            raise ValueError(f"train.channels: {self.loss} trains on the diagnosis channel only")
        if self.loss == "nrrank" and len(self.channels) != 1:
            raise ValueError("train.channels: nrrank needs exactly one integer_scale channel")
        if self.nrrank_mode not in NRRANK_MODES:
            raise ValueError(f"train.nrrank_mode must be one of {NRRANK_MODES}")
        for name in ("epsilon", "contrastive_margin", "learning_rate"):
            if not getattr(self, name) > 0:
                raise ValueError(f"train.{name} must be positive")
        for name in ("total_batches", "batch_size", "eval_interval", "samples_per_subject"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"train.{name} must be >= 1")
        if self.batch_size < 2:
            raise ValueError("train.batch_size must be >= 2 for pairwise losses")
        if self.sampler not in ("uniform", "subject"):
            raise ValueError("train.sampler must be 'uniform' or 'subject'")
        if any(h < 1 for h in self.hidden):
            raise ValueError("train.hidden widths must be >= 1")
        if self.activation not in ("tanh", "identity"):
            raise ValueError("train.activation must be 'tanh' or 'identity'")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        for key in d:
            if key not in known:
                raise ValueError(f"unknown train field {key!r}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def _derived_seeds(seed: int) -> dict[str, int]:
    init_ss, sampler_ss = np.random.SeedSequence(seed).spawn(2)
    return {"init": int(init_ss.generate_state(1)[0]),
            "sampler": int(sampler_ss.generate_state(1)[0])}


def _json_threshold(t: float):
    # +-inf is not valid JSON
    return t if np.isfinite(t) else ("inf" if t > 0 else "-inf")


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Scorer:
    """Severity scores from a model plus its preprocessing metadata."""

    def __init__(self, model: ScoringModel, metadata: dict):
        self.model = model
        self.metadata = metadata
        self.mean = np.asarray(metadata.get("feature_mean", np.zeros(model.input_dim)))
        self.scale = np.asarray(metadata.get("feature_scale", np.ones(model.input_dim)))
        self.loss = metadata.get("loss", "comparator")

    @classmethod
    def from_checkpoint(cls, path) -> "Scorer":
        model, _, meta = ckpt_io.load_checkpoint(path)
        return cls(model, meta)

    def prepare(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.scale

    def outputs(self, X) -> np.ndarray:
        return forward(self.model, self.prepare(np.atleast_2d(X)))

    def scores(self, X) -> np.ndarray:
        out = self.outputs(X)
        if self.loss == "cross_entropy":
            return sigmoid(out)
        if self.loss == "nrrank":
            return nrrank_score(out, self.metadata["nrrank"]["mode"])
        return out


def build_channels(cfg: TrainConfig, dataset: Dataset) -> list[LabelChannel]:
    out = []
    for name in cfg.channels:
        if name == "chronology":
            out.append(chronology_channel(dataset, cfg.chronology_restrict_to or None))
        else:
            out.append(dataset.channel(name))
    return out


def _check_compatible(cfg: TrainConfig, dataset: Dataset) -> None:
    for name in cfg.channels:
        if name == "chronology":
            continue
        try:
            ordering = dataset.ordering(name)
        except KeyError:
            raise ValueError(f"train.channels: dataset has no ordering {name!r}") from None
        if cfg.loss == "nrrank" and ordering.kind != "integer_scale":
            raise ValueError(f"train.channels: nrrank needs an integer_scale channel, "
                             f"{name!r} is {ordering.kind}")
        if cfg.loss in ("cross_entropy", "contrastive") and ordering.kind != "diagnosis":
            raise ValueError(f"train.channels: {name!r} is not a diagnosis channel")


@dataclass
class RunState:
    model: ScoringModel
    adam: AdamState
    step: int = 0
    best_accuracy: float = -1.0
    history: list[dict] = field(default_factory=list)
    checkpoints: list[dict] = field(default_factory=list)


class Trainer:
    def __init__(self, cfg: TrainConfig, dataset: Dataset, run_dir, dataset_path=None):
        cfg.validate()
        _check_compatible(cfg, dataset)
        self.cfg = cfg
        self.dataset = dataset
        self.run_dir = Path(run_dir)
        self.dataset_path = dataset_path
        self.seeds = _derived_seeds(cfg.seed)

        self.train_idx = dataset.split_indices("train")
        self.val_idx = dataset.split_indices("validation")
        if self.train_idx.size < 2:
            raise ValueError("dataset has fewer than two training samples")
        diag = dataset.diagnosis_array()
        if self.val_idx.size == 0 or len(set(diag[self.val_idx].tolist())) < 2:
            raise ValueError("validation split must contain both HC and MND samples")
        self.diagnosis = diag

        X = dataset.features
        if cfg.standardize:
            mean = X[self.train_idx].mean(axis=0)
            scale = X[self.train_idx].std(axis=0)
            scale = np.where(scale > 0, scale, 1.0)
        else:
            mean, scale = np.zeros(dataset.dim), np.ones(dataset.dim)
        self.metadata = {"loss": cfg.loss, "name": cfg.name,
                         "feature_mean": mean.tolist(), "feature_scale": scale.tolist()}
        self.X = (X - mean) / scale
        self.channels = build_channels(cfg, dataset)

        n_out = 1
        if cfg.loss == "nrrank":
            ch = self.channels[0]
            train_present = ch.present[self.train_idx]
            if not train_present.any():
                raise ValueError(f"channel {ch.name!r} has no labels in the training split")
            vals = ch.values[self.train_idx][train_present]
            lo, hi = int(vals.min()), int(vals.max())
            n_out = hi - lo + 1
            self.metadata["nrrank"] = {"offset": lo, "n_classes": n_out, "mode": cfg.nrrank_mode,
                                       "channel": ch.name}
            self._nr_index = np.clip(ch.values - lo, 0, n_out - 1)
            self._nr_present = ch.present
        self.layer_dims = [dataset.dim, *cfg.hidden, n_out]
        if cfg.sampler == "subject":
            self.sampler = BatchSampler(self.train_idx, cfg.batch_size, self.seeds["sampler"],
                                        "subject", dataset.subject_array(), cfg.samples_per_subject)
        else:
            self.sampler = BatchSampler(self.train_idx, cfg.batch_size, self.seeds["sampler"])

    # -- state ------------------------------------------------------------

    def fresh_state(self) -> RunState:
        model = ScoringModel.initialize(self.layer_dims, self.seeds["init"], self.cfg.activation)
        adam = AdamState.for_model(model, learning_rate=self.cfg.learning_rate,
                                   beta1=self.cfg.beta1, beta2=self.cfg.beta2,
                                   epsilon_num=self.cfg.epsilon_num)
        return RunState(model, adam)

    def scorer(self, model: ScoringModel) -> Scorer:
        return Scorer(model, self.metadata)

    def batch_loss(self, model: ScoringModel, idx: np.ndarray) -> tuple[BatchLoss, np.ndarray]:
        """Loss on one batch and its gradient with respect to model outputs."""
        cfg = self.cfg
        Xb = self.X[idx]
        out = forward(model, Xb)
        if cfg.loss == "comparator":
            bl = (multi_ordering_loss(out, [ch.take(idx) for ch in self.channels], cfg.epsilon)
                  if len(self.channels) > 1
                  else comparator_batch_loss(out, self.channels[0].take(idx), cfg.epsilon))
            return bl, bl.grad
        if cfg.loss == "contrastive":
            bl = contrastive_batch_loss(out, self.channels[0].take(idx), cfg.contrastive_margin)
            return bl, bl.grad
        if cfg.loss == "cross_entropy":
            loss, grad = cross_entropy_loss(out, self.diagnosis[idx])
            return BatchLoss(float(loss.sum()), grad, 0, 0, False, ["diagnosis"]), grad
        nr = self.metadata["nrrank"]
        bl = nrrank_batch_loss(out, self._nr_index[idx], self._nr_present[idx],
                               nr["n_classes"], nr["mode"])
        return bl, bl.grad

    def train_step(self, state: RunState, batch_index: int) -> BatchLoss:
        idx = self.sampler.batch(batch_index)
        bl, grad_out = self.batch_loss(state.model, idx)
        if not np.isfinite(bl.loss):
            raise NumericalError("non-finite loss", batch_index)
        tape = backward(state.model, self.X[idx], grad_out)
        adam_step(state.model, tape, state.adam, batch_index)
        state.step = batch_index + 1
        return bl

    def validation_accuracy(self, model: ScoringModel):
        scores = self.scorer(model).scores(self.dataset.features[self.val_idx])
        return oracle_threshold_accuracy(scores, self.diagnosis[self.val_idx])

    # -- manifest ---------------------------------------------------------

    def manifest(self, state: RunState, status: str) -> dict:
        dataset_info = {"n_samples": len(self.dataset),
                        "n_train": int(self.train_idx.size),
                        "n_validation": int(self.val_idx.size)}
        if self.dataset_path is not None:
            dataset_info["path"] = str(self.dataset_path)
            dataset_info["sha256"] = file_sha256(self.dataset_path)
        best = state.checkpoints[-1] if state.checkpoints else None
        return {
            "format": RUN_FORMAT,
            "version": 1,
            "config": self.cfg.to_dict(),
            "seeds": {"seed": self.cfg.seed, **self.seeds},
            "layer_dims": list(self.layer_dims),
            "dataset": dataset_info,
            "status": status,
            "completed_batches": state.step,
            "history": state.history,
            "checkpoints": state.checkpoints,
            "best": best,
        }

    def write_manifest(self, state: RunState, status: str) -> Path:
        path = self.run_dir / MANIFEST_NAME
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(self.manifest(state, status), indent=2) + "\n")
        tmp.replace(path)
        return path

    def load_resume(self) -> RunState:
        manifest = json.loads((self.run_dir / MANIFEST_NAME).read_text())
        if manifest.get("config") != self.cfg.to_dict():
            raise ValueError("cannot resume: configuration differs from the manifest")
        model, adam, _ = ckpt_io.load_checkpoint(self.run_dir / RESUME_NAME)
        step = int(manifest["completed_batches"])
        if adam is None or adam.step != step:
            raise ValueError("cannot resume: resume checkpoint does not match the manifest")
        best = max((c["val_accuracy"] for c in manifest["checkpoints"]), default=-1.0)
        return RunState(model, adam, step, best, manifest["history"], manifest["checkpoints"])

    # -- loop -------------------------------------------------------------

    def run(self, resume: bool = False,
            progress: Callable[[dict], None] | None = None,
            stop_after: int | None = None) -> dict:
        """Train to ``total_batches``; returns the final manifest.

        ``stop_after`` ends the loop early (after that many total batches,
        rounded to an evaluation boundary) leaving a resumable run.
        """
        cfg = self.cfg
        self.run_dir.mkdir(parents=True, exist_ok=True)
        (self.run_dir / "checkpoints").mkdir(exist_ok=True)
        if resume and (self.run_dir / MANIFEST_NAME).exists():
            state = self.load_resume()
        else:
            state = self.fresh_state()
        losses: list[float] = []
        per_pair: list[float] = []
        while state.step < cfg.total_batches:
            bl = self.train_step(state, state.step)
            losses.append(bl.loss)
            per_pair.append(bl.per_pair)
            if state.step % cfg.eval_interval and state.step != cfg.total_batches:
                continue
            record = self._evaluate(state, losses, per_pair)
            losses, per_pair = [], []
            if progress is not None:
                progress(record)
            if stop_after is not None and state.step >= stop_after:
                return self._checkpoint_resume(state, "interrupted")
        return self._checkpoint_resume(state, "complete")

    def _evaluate(self, state: RunState, losses, per_pair) -> dict:
        val = self.validation_accuracy(state.model)
        improved = val.accuracy > state.best_accuracy
        record = {"batch": state.step,
                  "train_loss": float(np.mean(losses)),
                  "train_loss_per_pair": float(np.mean(per_pair)),
                  "val_accuracy": val.accuracy,
                  "val_threshold": _json_threshold(val.threshold),
                  "improved": bool(improved)}
        if improved:
            state.best_accuracy = val.accuracy
            rel = f"checkpoints/ckpt_{state.step:07d}.ckpt"
            meta = dict(self.metadata, step=state.step, val_accuracy=val.accuracy,
                        val_threshold=_json_threshold(val.threshold))
            ckpt_io.save_checkpoint(self.run_dir / rel, state.model, None, meta)
            ckpt_io.save_checkpoint(self.run_dir / "checkpoints" / "best.ckpt",
                                    state.model, None, meta)
            state.checkpoints.append({"batch": state.step, "val_accuracy": val.accuracy,
                                      "path": rel})
            record["checkpoint"] = rel
        state.history.append(record)
        log.info("batch %d loss %.4g val_acc %.4f%s", state.step, record["train_loss"],
                 val.accuracy, " *" if improved else "")
        return record

    def _checkpoint_resume(self, state: RunState, status: str) -> dict:
        ckpt_io.save_checkpoint(self.run_dir / RESUME_NAME, state.model, state.adam,
                                dict(self.metadata, step=state.step))
        self.write_manifest(state, status)
        return self.manifest(state, status)


def train(cfg: TrainConfig, dataset: Dataset, run_dir, dataset_path=None,
          resume: bool = False, **kwargs) -> dict:
    return Trainer(cfg, dataset, run_dir, dataset_path).run(resume=resume, **kwargs)
