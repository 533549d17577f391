"""Online tracking: first-frame initialization, per-frame estimation and updates."""

# SPDX-License-Identifier: Apache-2.0

import logging
from dataclasses import dataclass, field
from numbers import Integral
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from mdtracker.config import (
    BACKGROUND_LABEL,
    FRAME_NEG,
    FRAME_POS,
    LONG_UPDATE_PERIOD,
    MAX_SEARCH_EXPANSION,
    MOMENTUM,
    NUM_CANDIDATES,
    REGRESSION_LAMBDA,
    REGRESSION_MIN_IOU,
    REGRESSION_SAMPLES,
    SCALE_BASE,
    SCALE_VAR,
    SCORE_THRESHOLD,
    SEARCH_EXPANSION_FACTOR,
    TARGET_LABEL,
    TAU_L,
    TAU_S,
    TRANS_VAR_COEFF,
    WEIGHT_DECAY,
)
from mdtracker.engine.layers import softmax_cross_entropy
from mdtracker.engine.optim import sgd_step
from mdtracker.exceptions import ConfigurationError, InputError, UsageError
from mdtracker.models.geometry import BoundingBox, CandidateGenConfig, TargetState
from mdtracker.models.mdnet import EVAL_BATCH_SIZE, MDNet
from mdtracker.regression import apply_regressor, RegressorWeights, train_regressor
from mdtracker.sampling import (
    draw_candidate_array,
    draw_training_samples,
    extract_patches,
    image_size_of,
)
from mdtracker.utils import (
    check_in_range,
    check_positive,
    check_type,
    parse_layer_ranges,
)


logger = logging.getLogger(__name__)


SHORT_TERM_UPDATE = "short-term"
LONG_TERM_UPDATE = "long-term"


@dataclass
class TrackerConfig:
    """Every scalar hyperparameter of online tracking.

    Learning rates are those of the first frame; updates during tracking use
    `update_lr_factor` times them. `use_bbox_regression` and
    `use_hard_mining` switch off the corresponding refinements (ablations).
    `store_patches` keeps raw patches instead of conv3 features so that
    unfrozen conv layers can be fine-tuned.
    """

    num_candidates: int = NUM_CANDIDATES
    trans_var_coeff: float = TRANS_VAR_COEFF
    scale_var: float = SCALE_VAR
    scale_base: float = SCALE_BASE
    tau_s: int = TAU_S
    tau_l: int = TAU_L
    score_threshold: float = SCORE_THRESHOLD
    init_iters: int = 30
    update_iters: int = 10
    lr_fc45_init: float = 0.0001
    lr_fc6_init: float = 0.001
    update_lr_factor: float = 3.0
    momentum: float = MOMENTUM
    weight_decay: float = WEIGHT_DECAY
    m_plus: int = 32
    m_hard: int = 96
    m_neg_pool: int = 1024
    first_frame_pos: int = 500
    first_frame_neg: int = 5000
    frame_pos: int = FRAME_POS
    frame_neg: int = FRAME_NEG
    pos_iou: float = 0.7
    neg_iou: float = 0.3
    long_update_period: int = LONG_UPDATE_PERIOD
    search_expansion_factor: float = SEARCH_EXPANSION_FACTOR
    max_search_expansion: float = MAX_SEARCH_EXPANSION
    regression_samples: int = REGRESSION_SAMPLES
    regression_lambda: float = REGRESSION_LAMBDA
    regression_min_iou: float = REGRESSION_MIN_IOU
    trainable_layers: str = "w4:6"
    use_bbox_regression: bool = True
    use_hard_mining: bool = True
    store_patches: bool = False

    def __post_init__(self):
        counts = (
            "num_candidates",
            "tau_s",
            "tau_l",
            "init_iters",
            "update_iters",
            "m_plus",
            "m_hard",
            "m_neg_pool",
            "first_frame_pos",
            "first_frame_neg",
            "frame_pos",
            "frame_neg",
            "long_update_period",
            "regression_samples",
        )
        for name in counts:
            value = getattr(self, name)
            check_type(name, value, Integral)
            if value < 1:
                raise ConfigurationError(f"{name} must be >= 1; received {value}.")
        for name in ("use_bbox_regression", "use_hard_mining", "store_patches"):
            check_type(name, getattr(self, name), bool)
        rates = ("lr_fc45_init", "lr_fc6_init", "update_lr_factor", "regression_lambda")
        for name in rates:
            check_positive(name, getattr(self, name))
        check_positive("momentum", self.momentum, allow_zero=True)
        check_positive("weight_decay", self.weight_decay, allow_zero=True)
        for name in ("score_threshold", "regression_min_iou"):
            check_in_range(name, getattr(self, name), 0.0, 1.0, False, False)
        if self.m_hard > self.m_neg_pool:
            raise ConfigurationError(
                f"m_hard ({self.m_hard}) must not exceed "
                f"m_neg_pool ({self.m_neg_pool})."
            )
        if self.tau_s > self.tau_l:
            raise ConfigurationError(
                f"tau_s ({self.tau_s}) must not exceed tau_l ({self.tau_l})."
            )
        if not 0 < self.neg_iou < self.pos_iou <= 1:
            raise ConfigurationError(
                f"Expected 0 < neg_iou < pos_iou <= 1; received "
                f"{self.neg_iou}, {self.pos_iou}."
            )
        if self.search_expansion_factor < 1 or self.max_search_expansion < 1:
            raise ConfigurationError("Search expansion factors must be >= 1.")
        layers = parse_layer_ranges(self.trainable_layers)
        if not self.store_patches and any(layer <= 3 for layer in layers):
            raise ConfigurationError(
                "Training conv layers online needs store_patches=True; cached conv3 "
                "features cannot propagate gradients into w1:3."
            )
        # Validates the candidate settings as well.
        self.candidate_config

    @property
    def candidate_config(self) -> CandidateGenConfig:
        return CandidateGenConfig(
            num_candidates=self.num_candidates,
            trans_var_coeff=self.trans_var_coeff,
            scale_var=self.scale_var,
            scale_base=self.scale_base,
        )

    @property
    def update_lr(self) -> float:
        """Base (fc6) learning rate of updates during tracking."""
        return self.lr_fc6_init * self.update_lr_factor


@dataclass
class FrameSampleSet:
    """Stored training samples of one frame: conv3 features (or raw patches)."""

    frame_index: int
    positives: np.ndarray
    negatives: np.ndarray


@dataclass
class TrackerState:
    """Bookkeeping of a running tracker.

    `short_term` and `long_term` hold frame indices in insertion order; every
    index in either has an entry in `store`.
    """

    net: MDNet
    current: TargetState
    regressor: Optional[RegressorWeights] = None
    short_term: List[int] = field(default_factory=list)
    long_term: List[int] = field(default_factory=list)
    store: Dict[int, FrameSampleSet] = field(default_factory=dict)
    last_score: float = 1.0
    search_expansion: float = 1.0
    frame_index: int = 1


class HardMinibatch(NamedTuple):
    """An update minibatch plus the scoring snapshot used to pick negatives."""

    positives: np.ndarray
    negatives: np.ndarray
    pool_scores: np.ndarray
    selected: np.ndarray


class StepResult(NamedTuple):
    box: BoundingBox
    score: float
    collected: bool
    update: Optional[str]


@dataclass
class TrackingResult:
    """One reported box and score per frame (frame 1 reports the ground truth)."""

    boxes: List[BoundingBox] = field(default_factory=list)
    scores: List[float] = field(default_factory=list)
    updates: List[Optional[str]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.boxes)


class OnlineTracker(object):
    """Tracks one sequence with a private copy of a pretrained network.

    The network passed in is never modified: the tracker replaces the
    branches of its own copy, so one pretrained model can track many
    sequences.
    """

    def __init__(
        self,
        net: MDNet,
        config: Optional[TrackerConfig] = None,
        rng: Optional[np.random.Generator] = None,
    ) -> None:
        check_type("net", net, MDNet)
        self.config = config if config is not None else TrackerConfig()
        self.rng = rng if rng is not None else np.random.default_rng()
        self.net = net.copy()
        self.state: Optional[TrackerState] = None

    def __repr__(self) -> str:
        frame = self.state.frame_index if self.state is not None else None
        return f"{self.__class__.__name__}(net={self.net!r}, frame_index={frame!r})"

    def _require_state(self) -> TrackerState:
        if self.state is None:
            raise UsageError("The tracker has not been initialized on a first frame.")
        return self.state

    # Stored samples
    def _encode(self, frame, boxes: np.ndarray) -> np.ndarray:
        """Patches or conv3 features of `boxes`, computed chunk by chunk."""
        chunks = []
        for start in range(0, len(boxes), EVAL_BATCH_SIZE):
            patches = extract_patches(frame, boxes[start : start + EVAL_BATCH_SIZE])
            if not self.config.store_patches:
                patches = self.net.conv3_features(patches)
            chunks.append(patches)
        return np.concatenate(chunks)

    def _score(self, items: np.ndarray) -> np.ndarray:
        if self.config.store_patches:
            return self.net.score_patches(items)
        return self.net.score_features(items)

    def _logits(self, items: np.ndarray):
        if self.config.store_patches:
            return self.net.forward(items, 0, train_mode=True, rng=self.rng)
        return self.net.forward_fc(items, 0, train_mode=True, rng=self.rng)

    def collect_frame_samples(self, frame, t: int, box: BoundingBox) -> FrameSampleSet:
        """Draw and encode S_t+ / S_t- around `box` (first-frame counts at t = 1)."""
        cfg = self.config
        n_pos, n_neg = (
            (cfg.first_frame_pos, cfg.first_frame_neg)
            if t == 1
            else (cfg.frame_pos, cfg.frame_neg)
        )
        samples = draw_training_samples(
            box, n_pos, n_neg, cfg.pos_iou, cfg.neg_iou, self.rng, image_size_of(frame)
        )
        return FrameSampleSet(
            t,
            self._encode(frame, samples.positives),
            self._encode(frame, samples.negatives),
        )

    # Algorithm steps
    def initialize(self, frame, gt: BoundingBox) -> TrackerState:
        """Prepare the network for this sequence and train on the first frame."""
        check_type("gt", gt, BoundingBox)
        if gt.w <= 1 or gt.h <= 1:
            raise InputError(
                f"Degenerate first-frame box {gt!r}; w and h must exceed 1 px."
            )
        cfg = self.config
        net = self.net

        net.replace_branches(self.rng)
        net.set_trainable(cfg.trainable_layers)
        shared_multiplier = cfg.lr_fc45_init / cfg.lr_fc6_init
        net.set_lr_multipliers({layer: shared_multiplier for layer in range(1, 6)})
        net.set_lr_multipliers({6: 1.0})
        for group in net.param_groups():
            group.reset_momentum()

        regressor = None
        if cfg.use_bbox_regression:
            regressor = train_regressor(
                net,
                frame,
                gt,
                n_samples=cfg.regression_samples,
                lam=cfg.regression_lambda,
                rng=self.rng,
                min_iou=cfg.regression_min_iou,
            )

        first = self.collect_frame_samples(frame, 1, gt)
        self.state = TrackerState(
            net=net,
            current=TargetState.from_box(gt, scale_base=cfg.scale_base),
            regressor=regressor,
            short_term=[1],
            long_term=[1],
            store={1: first},
        )
        losses = self.update_network(
            [1], [1], iterations=cfg.init_iters, base_lr=cfg.lr_fc6_init
        )
        if losses:
            logger.info(
                "First frame: %d iterations, loss %.4f -> %.4f",
                len(losses),
                losses[0],
                losses[-1],
            )
        return self.state

    def estimate_target(self, frame) -> Tuple[TargetState, float]:
        """The candidate with the maximum f+ (lowest index among ties)."""
        state = self._require_state()
        candidates = draw_candidate_array(
            state.current,
            self.config.candidate_config,
            self.rng,
            state.search_expansion,
        )
        scores = self.net.score_patches(extract_patches(frame, candidates.boxes))
        best = int(np.argmax(scores))
        return candidates.state(best), float(scores[best])

    def _pool(self, indices: Sequence[int], positive: bool) -> np.ndarray:
        state = self._require_state()
        missing = [index for index in indices if index not in state.store]
        if missing:
            raise UsageError(f"No stored samples for frames {missing}.")
        arrays = [
            state.store[index].positives if positive else state.store[index].negatives
            for index in indices
        ]
        arrays = [array for array in arrays if len(array)]
        if not arrays:
            kind = "positive" if positive else "negative"
            raise UsageError(
                f"The {kind} sample store is empty for frames {list(indices)}."
            )
        return np.concatenate(arrays)

    def assemble_hard_minibatch(
        self,
        pos_indices: Sequence[int],
        neg_indices: Optional[Sequence[int]] = None,
    ) -> HardMinibatch:
        """M+ positives plus the M_hard highest-scoring of M- drawn negatives.

        Draws are uniform over the union of the stores of the given frames
        (without replacement while the pool is large enough). The selection is
        a stable sort on f+, so ties keep draw order.
        """
        cfg = self.config
        neg_indices = pos_indices if neg_indices is None else neg_indices
        positives = self._pool(pos_indices, positive=True)
        negatives = self._pool(neg_indices, positive=False)

        pos_rows = self.rng.choice(
            len(positives), cfg.m_plus, replace=len(positives) < cfg.m_plus
        )
        neg_rows = self.rng.choice(
            len(negatives), cfg.m_neg_pool, replace=len(negatives) < cfg.m_neg_pool
        )
        pool = negatives[neg_rows]
        pool_scores = self._score(pool)
        if cfg.use_hard_mining:
            selected = np.argsort(-pool_scores, kind="stable")[: cfg.m_hard]
        else:
            selected = np.arange(cfg.m_hard)
        return HardMinibatch(positives[pos_rows], pool[selected], pool_scores, selected)

    def update_network(
        self,
        pos_indices: Sequence[int],
        neg_indices: Sequence[int],
        iterations: Optional[int] = None,
        base_lr: Optional[float] = None,
    ) -> List[float]:
        """SGD on hard minibatches from the stored samples; returns the losses."""
        cfg = self.config
        iterations = cfg.update_iters if iterations is None else iterations
        base_lr = cfg.update_lr if base_lr is None else base_lr
        labels = np.concatenate(
            [np.full(cfg.m_plus, TARGET_LABEL), np.full(cfg.m_hard, BACKGROUND_LABEL)]
        )

        losses = []
        for _ in range(iterations):
            batch = self.assemble_hard_minibatch(pos_indices, neg_indices)
            items = np.concatenate([batch.positives, batch.negatives])
            loss = softmax_cross_entropy(self._logits(items), labels)
            loss.backward()
            sgd_step(
                self.net.param_groups(0),
                base_lr=base_lr,
                momentum=cfg.momentum,
                weight_decay=cfg.weight_decay,
            )
            losses.append(loss.item())
        return losses

    def _remember(self, t: int, samples: FrameSampleSet) -> None:
        state = self._require_state()
        state.store[t] = samples
        state.short_term.append(t)
        state.long_term.append(t)
        while len(state.short_term) > self.config.tau_s:
            state.short_term.remove(min(state.short_term))
        while len(state.long_term) > self.config.tau_l:
            state.long_term.remove(min(state.long_term))
        for index in list(state.store):
            if index not in state.short_term and index not in state.long_term:
                del state.store[index]

    def step(self, frame, t: int) -> StepResult:
        """Track frame t (t >= 2): estimate, collect or update, report."""
        state = self._require_state()
        check_type("t", t, Integral)
        if t < 2:
            raise UsageError(f"step() handles frames t >= 2; received t={t}.")
        cfg = self.config

        target, score = self.estimate_target(frame)
        reported = target.box
        collected = score > cfg.score_threshold
        update = None

        if collected:
            self._remember(t, self.collect_frame_samples(frame, t, target.box))
            if cfg.use_bbox_regression and state.regressor is not None:
                reported = apply_regressor(state.regressor, self.net, frame, reported)
            state.search_expansion = 1.0

        if score < cfg.score_threshold:
            self.update_network(state.short_term, state.short_term)
            update = SHORT_TERM_UPDATE
            state.search_expansion = min(
                state.search_expansion * cfg.search_expansion_factor,
                cfg.max_search_expansion,
            )
        elif t % cfg.long_update_period == 0:
            self.update_network(state.long_term, state.short_term)
            update = LONG_TERM_UPDATE

        state.current = target
        state.last_score = score
        state.frame_index = t
        logger.debug(
            "frame %d: f+ %.3f box %s%s",
            t,
            score,
            reported,
            f" ({update} update)" if update else "",
        )
        if update:
            logger.info("frame %d: %s update (f+ %.3f)", t, update, score)
        return StepResult(reported, score, collected, update)

    def track(self, frames: Iterable, gt_first: BoundingBox) -> TrackingResult:
        """Initialize on the first frame and step through the rest."""
        frames = iter(frames)
        try:
            first = next(frames)
        except StopIteration:
            raise InputError("Cannot track an empty sequence.") from None

        self.initialize(first, gt_first)
        result = TrackingResult([gt_first], [1.0], [None])
        for t, frame in enumerate(frames, start=2):
            step = self.step(frame, t)
            result.boxes.append(step.box)
            result.scores.append(step.score)
            result.updates.append(step.update)
        logger.info(
            "Tracked %d frames (%d updates).",
            len(result),
            sum(1 for update in result.updates if update),
        )
        return result


def init_first_frame(
    net: MDNet,
    frame,
    gt: BoundingBox,
    cfg: Optional[TrackerConfig] = None,
    rng: Optional[np.random.Generator] = None,
) -> OnlineTracker:
    """A tracker initialized on `frame`; its `state` holds the bookkeeping."""
    tracker = OnlineTracker(net, cfg, rng)
    tracker.initialize(frame, gt)
    return tracker


def estimate_target(tracker: OnlineTracker, frame) -> Tuple[TargetState, float]:
    return tracker.estimate_target(frame)


def assemble_hard_minibatch(
    tracker: OnlineTracker,
    pos_indices: Sequence[int],
    neg_indices: Optional[Sequence[int]] = None,
) -> HardMinibatch:
    return tracker.assemble_hard_minibatch(pos_indices, neg_indices)


def update_network(
    tracker: OnlineTracker,
    pos_indices: Sequence[int],
    neg_indices: Sequence[int],
) -> List[float]:
    return tracker.update_network(pos_indices, neg_indices)


def step(tracker: OnlineTracker, frame, t: int) -> StepResult:
    return tracker.step(frame, t)


def track_sequence(
    net: MDNet,
    frames: Iterable,
    gt_first: BoundingBox,
    cfg: Optional[TrackerConfig] = None,
    rng: Optional[np.random.Generator] = None,
) -> TrackingResult:
    """Run the tracker over a whole sequence with a private copy of `net`."""
    return OnlineTracker(net, cfg, rng).track(frames, gt_first)
