"""Comparator-loss severity scoring: pairwise ordering losses, baselines,
synthetic longitudinal cohorts and the evaluation suite."""

from .checkpoint import CheckpointFormatError, deserialize, load_checkpoint, save_checkpoint, serialize
from .data import (
    BatchSampler,
    CohortConfig,
    Dataset,
    DatasetError,
    Sample,
    Subject,
    batch_sampler,
    generate_cohort,
    load_dataset,
    save_dataset,
    split_by_assessment_decile,
)
from .losses import (
    BatchLoss,
    PairLoss,
    comparator_batch_loss,
    comparator_pair_loss,
    contrastive_batch_loss,
    contrastive_pair_loss,
    cross_entropy_loss,
    multi_ordering_loss,
    nrrank_loss,
    nrrank_targets,
)
from .metrics import (
    auc,
    f1_at_threshold,
    oracle_threshold_accuracy,
    progression_slopes,
    score_distribution_summary,
    spearman,
)
from .model import GradientTape, ScoringModel, backward, forward
from .optim import AdamState, NumericalError, adam_step
from .ordering import LabelChannel, OrderingSystem, active_pairs, chronology_channel, normalize_channel
from .training import Scorer, TrainConfig, Trainer, train

__version__ = "0.1.0"
