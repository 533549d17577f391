"""Unit tests for offline multi-domain pretraining."""

# SPDX-License-Identifier: Apache-2.0

import numpy as np
import pytest

from mdtracker.exceptions import ConfigurationError, InputError, UsageError
from mdtracker.models.mdnet import ONLINE_MODE, PRETRAIN_MODE
from mdtracker.training import (
    build_domain_dataset,
    DomainDataset,
    domain_accuracy,
    finetune_branch,
    merge_datasets,
    minibatch_loss,
    pretrain,
    pretrain_single_domain,
    PretrainConfig,
    sample_minibatch,
)
from tests.utils import small_net, small_sequence


# Helper functions
def quick_config(**overrides) -> PretrainConfig:
    options = dict(
        iterations=2,
        pos_per_batch=4,
        neg_per_batch=8,
        frame_pos=10,
        frame_neg=20,
    )
    options.update(overrides)
    return PretrainConfig(**options)


# Fixtures
@pytest.fixture(scope="module")
def datasets():
    rng = np.random.default_rng(0)
    return [
        build_domain_dataset(
            small_sequence(num_frames=3, seed=seed), rng, domain, quick_config()
        )
        for domain, seed in enumerate((1, 2))
    ]


# Happy path tests
def test_build_domain_dataset(datasets):
    dataset = datasets[0]
    assert len(dataset) == 3
    assert dataset.num_positives == 30
    assert dataset.num_negatives == 60
    assert all(boxes.shape == (10, 4) for boxes in dataset.positives)


def test_sample_minibatch(datasets):
    patches, labels = sample_minibatch(datasets[0], 4, 8, np.random.default_rng(0))
    assert patches.shape == (12, 3, 107, 107)
    assert labels.tolist() == [0] * 4 + [1] * 8


def test_merge_datasets(datasets):
    merged = merge_datasets(datasets)
    assert len(merged) == 6
    assert merged.num_positives == 60


def test_default_iterations_scale_with_the_domain_count():
    assert PretrainConfig().resolve_iterations(3) == 300


def test_domains_cycle_in_order(datasets):
    net = small_net(num_domains=2)
    result = pretrain(
        net, datasets, quick_config(iterations=4), np.random.default_rng(0)
    )
    assert result.domains == [0, 1, 0, 1]
    assert len(result.losses) == 4
    assert all(np.isfinite(result.losses))


def test_only_the_active_branch_moves(datasets):
    net = small_net(num_domains=2)
    branch_0 = net.branches[0].weights.data.copy()
    branch_1 = net.branches[1].weights.data.copy()
    checksum = net.shared_checksum()
    after_first_step = {}

    def snapshot(k, domain, loss):
        if k == 0:
            after_first_step["branch_0"] = net.branches[0].weights.data.copy()
            after_first_step["branch_1"] = net.branches[1].weights.data.copy()
            after_first_step["shared"] = net.shared_checksum()

    pretrain(
        net, datasets, quick_config(iterations=2), np.random.default_rng(0), snapshot
    )

    assert not np.array_equal(after_first_step["branch_0"], branch_0)
    assert np.array_equal(after_first_step["branch_1"], branch_1)
    assert after_first_step["shared"] != checksum
    # The second iteration trains branch 1 and leaves branch 0 alone.
    assert np.array_equal(net.branches[0].weights.data, after_first_step["branch_0"])
    assert not np.array_equal(net.branches[1].weights.data, branch_1)


def test_conv_layers_use_the_conv_learning_rate(datasets):
    net = small_net(num_domains=2)
    pretrain(
        net,
        datasets,
        quick_config(iterations=2, lr_conv=0.0002, lr_fc=0.002),
        np.random.default_rng(0),
    )
    assert [group.lr_multiplier for group in net.shared] == pytest.approx(
        [0.1, 0.1, 0.1, 1.0, 1.0]
    )


def test_callback_sees_every_iteration(datasets):
    seen = []
    pretrain(
        small_net(num_domains=2),
        datasets,
        quick_config(iterations=3),
        np.random.default_rng(0),
        callback=lambda k, domain, loss: seen.append((k, domain)),
    )
    assert seen == [(0, 0), (1, 1), (2, 0)]


def test_single_domain_training_pools_every_sequence(datasets):
    net = small_net(num_domains=1)
    result = pretrain_single_domain(
        net, datasets, quick_config(iterations=2), np.random.default_rng(0)
    )
    assert result.domains == [0, 0]


def test_finetune_branch_trains_a_fresh_branch_on_a_copy(datasets):
    net = small_net(num_domains=2)
    shared = net.shared_checksum()
    branch = net.branches[1].weights.data.copy()
    tuned, losses = finetune_branch(
        net, datasets[1], 2, quick_config(), np.random.default_rng(0)
    )

    assert len(losses) == 2 and all(np.isfinite(losses))
    assert tuned.mode == ONLINE_MODE and tuned.num_branches == 1
    assert tuned.shared_checksum() == shared
    assert net.mode == PRETRAIN_MODE and net.num_branches == 2
    assert np.array_equal(net.branches[1].weights.data, branch)


def test_domain_accuracy_is_a_fraction(datasets):
    accuracy = domain_accuracy(small_net(num_domains=2), datasets[1], branch=1)
    assert 0.0 <= accuracy <= 1.0


@pytest.mark.slow
def test_pretraining_lowers_the_loss():
    rng = np.random.default_rng(0)
    cfg = quick_config(
        iterations=60, pos_per_batch=8, neg_per_batch=24, lr_fc=0.005, lr_conv=0.0005
    )
    dataset = build_domain_dataset(small_sequence(num_frames=4), rng, 0, cfg)
    net = small_net(num_domains=1)
    patches, labels = sample_minibatch(dataset, 16, 48, np.random.default_rng(1))

    before = minibatch_loss(net, patches, labels)
    pretrain(net, [dataset], cfg, rng)
    after = minibatch_loss(net, patches, labels)

    assert after < before


# Unhappy path tests
def test_dataset_lengths_must_agree():
    with pytest.raises(InputError):
        DomainDataset(0, [np.zeros((4, 4, 3))], [], [], [])


def test_branch_count_must_match_the_datasets(datasets):
    with pytest.raises(ConfigurationError):
        pretrain(small_net(num_domains=3), datasets, quick_config())


def test_online_networks_cannot_be_pretrained(datasets):
    net = small_net(num_domains=1)
    net.replace_branches(np.random.default_rng(0))
    with pytest.raises(UsageError):
        pretrain(net, datasets[:1], quick_config())


def test_fewer_iterations_than_domains_are_rejected(datasets):
    with pytest.raises(ConfigurationError):
        pretrain(small_net(num_domains=2), datasets, quick_config(iterations=1))


def test_single_domain_training_needs_one_branch(datasets):
    with pytest.raises(ConfigurationError):
        pretrain_single_domain(small_net(num_domains=2), datasets, quick_config())


def test_finetune_branch_needs_iterations(datasets):
    with pytest.raises(ConfigurationError):
        finetune_branch(small_net(), datasets[0], 0)


@pytest.mark.parametrize(
    "overrides",
    [dict(lr_fc=0.0), dict(pos_per_batch=0), dict(pos_iou=0.4, neg_iou=0.5)],
)
def test_invalid_configs_are_rejected(overrides):
    with pytest.raises(ConfigurationError):
        quick_config(**overrides)
