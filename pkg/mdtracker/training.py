"""Offline multi-domain pretraining, one domain per iteration."""

# SPDX-License-Identifier: Apache-2.0

import logging
from dataclasses import dataclass, field
from numbers import Integral
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from mdtracker.config import (
    BACKGROUND_LABEL,
    FRAME_NEG,
    FRAME_POS,
    MOMENTUM,
    OFFLINE_NEG_IOU,
    OFFLINE_POS_IOU,
    PRETRAIN_ITERATIONS_PER_DOMAIN,
    PRETRAIN_LR_CONV,
    PRETRAIN_LR_FC,
    PRETRAIN_NEG_PER_BATCH,
    PRETRAIN_POS_PER_BATCH,
    TARGET_LABEL,
    WEIGHT_DECAY,
)
from mdtracker.engine.layers import softmax_cross_entropy
from mdtracker.engine.optim import sgd_step
from mdtracker.exceptions import ConfigurationError, InputError, UsageError
from mdtracker.models.geometry import BoundingBox
from mdtracker.models.mdnet import MDNet, PRETRAIN_MODE
from mdtracker.sampling import draw_training_samples, extract_patches, image_size_of
from mdtracker.utils import check_positive, check_type


logger = logging.getLogger(__name__)


IterationCallback = Callable[[int, int, float], None]


@dataclass
class DomainDataset:
    """One training sequence (domain) with cached per-frame sample boxes.

    `positives[i]` and `negatives[i]` are (n, 4) x, y, w, h arrays drawn
    around `groundtruth[i]` in `frames[i]`.
    """

    domain_id: int
    frames: List[np.ndarray]
    groundtruth: List[BoundingBox]
    positives: List[np.ndarray]
    negatives: List[np.ndarray]

    def __post_init__(self):
        lengths = {
            len(self.frames),
            len(self.groundtruth),
            len(self.positives),
            len(self.negatives),
        }
        if len(lengths) != 1:
            raise InputError(
                f"Domain {self.domain_id}: frames, ground truth and sample caches "
                f"must have equal lengths."
            )
        if not self.frames:
            raise InputError(f"Domain {self.domain_id} has no frames.")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def num_positives(self) -> int:
        return sum(len(boxes) for boxes in self.positives)

    @property
    def num_negatives(self) -> int:
        return sum(len(boxes) for boxes in self.negatives)


@dataclass
class PretrainConfig:
    """Hyperparameters of the offline loop.

    `iterations` defaults to PRETRAIN_ITERATIONS_PER_DOMAIN * K when left as
    None. Conv layers step at `lr_conv`, fc layers at `lr_fc`.
    """

    iterations: Optional[int] = None
    lr_conv: float = PRETRAIN_LR_CONV
    lr_fc: float = PRETRAIN_LR_FC
    pos_per_batch: int = PRETRAIN_POS_PER_BATCH
    neg_per_batch: int = PRETRAIN_NEG_PER_BATCH
    momentum: float = MOMENTUM
    weight_decay: float = WEIGHT_DECAY
    frame_pos: int = FRAME_POS
    frame_neg: int = FRAME_NEG
    pos_iou: float = OFFLINE_POS_IOU
    neg_iou: float = OFFLINE_NEG_IOU
    log_every: int = 10

    def __post_init__(self):
        check_type("iterations", self.iterations, Integral, optional=True)
        check_positive("lr_conv", self.lr_conv)
        check_positive("lr_fc", self.lr_fc)
        check_positive("momentum", self.momentum, allow_zero=True)
        check_positive("weight_decay", self.weight_decay, allow_zero=True)
        for name in (
            "pos_per_batch",
            "neg_per_batch",
            "frame_pos",
            "frame_neg",
            "log_every",
        ):
            value = getattr(self, name)
            check_type(name, value, Integral)
            if value < 1:
                raise ConfigurationError(f"{name} must be >= 1; received {value}.")
        if not 0 < self.neg_iou < self.pos_iou <= 1:
            raise ConfigurationError(
                f"Expected 0 < neg_iou < pos_iou <= 1; received "
                f"{self.neg_iou}, {self.pos_iou}."
            )

    def resolve_iterations(self, num_domains: int) -> int:
        iterations = (
            self.iterations
            if self.iterations is not None
            else PRETRAIN_ITERATIONS_PER_DOMAIN * num_domains
        )
        if iterations < num_domains:
            raise ConfigurationError(
                f"iterations ({iterations}) must be >= the number of domains "
                f"({num_domains})."
            )
        return iterations


@dataclass
class PretrainResult:
    """The trained network plus per-iteration loss and active domain."""

    net: MDNet
    losses: List[float] = field(default_factory=list)
    domains: List[int] = field(default_factory=list)


def build_domain_dataset(
    sequence,
    rng: np.random.Generator,
    domain_id: int = 0,
    cfg: Optional[PretrainConfig] = None,
) -> DomainDataset:
    """Cache frame_pos / frame_neg sample boxes per annotated frame.

    `sequence` is anything with `frames` and `groundtruth` attributes (a loaded
    or synthetic sequence).
    """
    cfg = cfg if cfg is not None else PretrainConfig()
    frames = list(sequence.frames)
    groundtruth = list(sequence.groundtruth)
    if not frames or len(frames) != len(groundtruth):
        raise InputError(
            f"Domain {domain_id} needs at least one frame and one ground-truth box "
            f"per frame; received {len(frames)} frames, {len(groundtruth)} boxes."
        )

    positives, negatives = [], []
    for frame, gt in zip(frames, groundtruth):
        samples = draw_training_samples(
            gt,
            cfg.frame_pos,
            cfg.frame_neg,
            cfg.pos_iou,
            cfg.neg_iou,
            rng,
            image_size_of(frame),
        )
        positives.append(samples.positives)
        negatives.append(samples.negatives)

    dataset = DomainDataset(domain_id, frames, groundtruth, positives, negatives)
    logger.info(
        "Domain %d: %d frames, %d positive and %d negative samples cached.",
        domain_id,
        len(dataset),
        dataset.num_positives,
        dataset.num_negatives,
    )
    return dataset


def merge_datasets(
    datasets: Sequence[DomainDataset], domain_id: int = 0
) -> DomainDataset:
    """Pool every domain's frames and sample caches into one dataset."""
    if not datasets:
        raise InputError("Cannot merge an empty list of datasets.")
    return DomainDataset(
        domain_id,
        [frame for dataset in datasets for frame in dataset.frames],
        [gt for dataset in datasets for gt in dataset.groundtruth],
        [boxes for dataset in datasets for boxes in dataset.positives],
        [boxes for dataset in datasets for boxes in dataset.negatives],
    )


def _draw_boxes(
    caches: List[np.ndarray], count: int, rng: np.random.Generator
) -> List[Tuple[int, np.ndarray]]:
    """Pick frames uniformly with replacement, then one cached box per pick."""
    frames = rng.integers(0, len(caches), size=count)
    picks = []
    for frame_index in np.unique(frames):
        cache = caches[frame_index]
        if len(cache) == 0:
            raise UsageError(f"Frame {frame_index} has no cached samples.")
        rows = rng.integers(0, len(cache), size=int(np.sum(frames == frame_index)))
        picks.append((int(frame_index), cache[rows]))
    return picks


def sample_minibatch(
    dataset: DomainDataset,
    n_pos: int,
    n_neg: int,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray]:
    """Patches (N x 3 x S x S) and labels for n_pos positives then n_neg negatives."""
    patches = []
    for caches, count in ((dataset.positives, n_pos), (dataset.negatives, n_neg)):
        for frame_index, boxes in _draw_boxes(caches, count, rng):
            patches.append(extract_patches(dataset.frames[frame_index], boxes))
    labels = np.concatenate(
        [np.full(n_pos, TARGET_LABEL), np.full(n_neg, BACKGROUND_LABEL)]
    )
    return np.concatenate(patches), labels


def minibatch_loss(
    net: MDNet, patches: np.ndarray, labels: np.ndarray, branch: int = 0
) -> float:
    """Eval-mode softmax cross-entropy of a fixed minibatch."""
    return softmax_cross_entropy(net.forward(patches, branch), labels).item()


def pretrain(
    net: MDNet,
    datasets: Sequence[DomainDataset],
    cfg: Optional[PretrainConfig] = None,
    rng: Optional[np.random.Generator] = None,
    callback: Optional[IterationCallback] = None,
) -> PretrainResult:
    """Train shared layers and branches, cycling through domains.

    Iteration k trains branch d = k mod K on a minibatch from dataset d; only
    the shared groups and branch d are passed to the optimizer, so every other
    branch is left bit-identical. `callback(k, d, loss)` runs after each step.
    """
    cfg = cfg if cfg is not None else PretrainConfig()
    rng = rng if rng is not None else np.random.default_rng()
    if net.mode != PRETRAIN_MODE:
        raise UsageError("pretrain() needs a network in pretrain mode.")
    num_domains = len(datasets)
    if num_domains != net.num_branches:
        raise ConfigurationError(
            f"The network has {net.num_branches} branches but {num_domains} "
            f"datasets were supplied."
        )
    iterations = cfg.resolve_iterations(num_domains)

    conv_multiplier = cfg.lr_conv / cfg.lr_fc
    net.set_lr_multipliers(
        {layer: conv_multiplier if layer <= 3 else 1.0 for layer in range(1, 7)}
    )

    result = PretrainResult(net)
    logger.info(
        "Pretraining %d domains for %d iterations (lr conv %g, fc %g).",
        num_domains,
        iterations,
        cfg.lr_conv,
        cfg.lr_fc,
    )
    for k in range(iterations):
        domain = k % num_domains
        patches, labels = sample_minibatch(
            datasets[domain], cfg.pos_per_batch, cfg.neg_per_batch, rng
        )
        logits = net.forward(patches, branch=domain, train_mode=True, rng=rng)
        loss = softmax_cross_entropy(logits, labels)
        loss.backward()
        sgd_step(
            net.param_groups(domain),
            base_lr=cfg.lr_fc,
            momentum=cfg.momentum,
            weight_decay=cfg.weight_decay,
        )

        result.losses.append(loss.item())
        result.domains.append(domain)
        if (k + 1) % cfg.log_every == 0 or k + 1 == iterations:
            window = result.losses[-cfg.log_every :]
            logger.info(
                "iteration %d/%d domain %d loss %.4f (mean of last %d: %.4f)",
                k + 1,
                iterations,
                domain,
                loss.item(),
                len(window),
                float(np.mean(window)),
            )
        if callback is not None:
            callback(k, domain, loss.item())

    return result


def pretrain_single_domain(
    net: MDNet,
    datasets: Sequence[DomainDataset],
    cfg: Optional[PretrainConfig] = None,
    rng: Optional[np.random.Generator] = None,
    callback: Optional[IterationCallback] = None,
) -> PretrainResult:
    """One branch trained on minibatches pooled across every sequence."""
    if net.num_branches != 1:
        raise ConfigurationError(
            f"Single-domain training needs a one-branch network; this one has "
            f"{net.num_branches}."
        )
    merged = datasets[0] if len(datasets) == 1 else merge_datasets(datasets)
    return pretrain(net, [merged], cfg, rng, callback)


def finetune_branch(
    net: MDNet,
    dataset: DomainDataset,
    iterations: int,
    cfg: Optional[PretrainConfig] = None,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[MDNet, List[float]]:
    """Train a fresh fc6 on `dataset` over frozen shared layers.

    Works on a copy; `net` keeps its branches. Returns the online-mode copy
    and its loss trace. Used to compare what different pretraining runs left
    in the shared layers.
    """
    cfg = cfg if cfg is not None else PretrainConfig()
    rng = rng if rng is not None else np.random.default_rng()
    check_type("iterations", iterations, Integral)
    if iterations < 1:
        raise ConfigurationError(f"iterations must be >= 1; received {iterations}.")

    tuned = net.copy()
    tuned.set_trainable("w6")
    tuned.replace_branches(rng)
    losses = []
    for _ in range(iterations):
        patches, labels = sample_minibatch(
            dataset, cfg.pos_per_batch, cfg.neg_per_batch, rng
        )
        loss = softmax_cross_entropy(tuned.forward(patches, 0), labels)
        loss.backward()
        sgd_step(
            tuned.param_groups(0),
            base_lr=cfg.lr_fc,
            momentum=cfg.momentum,
            weight_decay=cfg.weight_decay,
        )
        losses.append(loss.item())
    logger.info(
        "Fine-tuned a fresh branch for %d iterations, loss %.4f -> %.4f",
        iterations,
        losses[0],
        losses[-1],
    )
    return tuned, losses


def domain_accuracy(
    net: MDNet,
    dataset: DomainDataset,
    branch: int = 0,
) -> float:
    """Fraction of cached samples classified correctly (f+ > 0.5 for positives)."""
    correct = 0
    total = 0
    for frame, positives, negatives in zip(
        dataset.frames, dataset.positives, dataset.negatives
    ):
        if len(positives):
            scores = net.score_patches(extract_patches(frame, positives), branch)
            correct += int(np.sum(scores > 0.5))
            total += len(positives)
        if len(negatives):
            scores = net.score_patches(extract_patches(frame, negatives), branch)
            correct += int(np.sum(scores <= 0.5))
            total += len(negatives)
    return correct / total if total else 0.0
