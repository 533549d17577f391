"""Unit tests for binary checkpoints."""

# SPDX-License-Identifier: Apache-2.0

import struct

import numpy as np
import pytest

from mdtracker.checkpoint import load_checkpoint, save_checkpoint
from mdtracker.config import CHECKPOINT_MAGIC, CHECKPOINT_VERSION
from mdtracker.exceptions import CheckpointError, UnsupportedVersionError
from mdtracker.models.mdnet import ONLINE_MODE, PRETRAIN_MODE
from tests.utils import small_net


# Helper functions
def assert_same_parameters(first, second):
    first_groups, second_groups = first.param_groups(), second.param_groups()
    assert [g.name for g in first_groups] == [g.name for g in second_groups]
    for a, b in zip(first_groups, second_groups):
        assert a.weights.data.dtype == np.float32
        assert np.array_equal(a.weights.data, b.weights.data)
        assert np.array_equal(a.bias.data, b.bias.data)


# Fixtures
@pytest.fixture
def checkpoint(tmp_path):
    return save_checkpoint(small_net(num_domains=3, seed=5), tmp_path / "net.mdnc")


# Happy path tests
def test_round_trip_is_bit_exact(checkpoint):
    original = small_net(num_domains=3, seed=5)
    loaded = load_checkpoint(checkpoint)
    assert_same_parameters(original, loaded)
    assert loaded.shared_checksum() == original.shared_checksum()


def test_round_trip_restores_the_configuration(checkpoint):
    loaded = load_checkpoint(checkpoint)
    assert loaded.num_branches == 3
    assert loaded.mode == PRETRAIN_MODE
    assert loaded.config.channels == (12, 32, 64)
    assert loaded.config.lrn_enabled is False


def test_file_starts_with_magic_and_version(checkpoint):
    header = checkpoint.read_bytes()[:8]
    assert header[:4] == CHECKPOINT_MAGIC
    assert struct.unpack("<I", header[4:])[0] == CHECKPOINT_VERSION


def test_online_networks_load_in_online_mode(tmp_path):
    net = small_net()
    net.replace_branches(np.random.default_rng(0))
    loaded = load_checkpoint(save_checkpoint(net, tmp_path / "online.mdnc"))
    assert loaded.mode == ONLINE_MODE
    assert loaded.num_branches == 1
    assert_same_parameters(net, loaded)


def test_save_creates_parent_directories(tmp_path):
    path = save_checkpoint(small_net(), tmp_path / "a" / "b" / "net.mdnc")
    assert path.is_file()


# Unhappy path tests
def test_missing_checkpoint(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.mdnc")


def test_wrong_magic(checkpoint):
    checkpoint.write_bytes(b"XXXX" + checkpoint.read_bytes()[4:])
    with pytest.raises(CheckpointError):
        load_checkpoint(checkpoint)


def test_unsupported_version(checkpoint):
    data = checkpoint.read_bytes()
    checkpoint.write_bytes(data[:4] + struct.pack("<I", 99) + data[8:])
    with pytest.raises(UnsupportedVersionError) as exception_info:
        load_checkpoint(checkpoint)
    assert exception_info.value.version == 99


@pytest.mark.parametrize("keep", [2, 10, 40, -4])
def test_truncated_checkpoint(checkpoint, keep):
    data = checkpoint.read_bytes()
    checkpoint.write_bytes(data[:keep])
    with pytest.raises(CheckpointError):
        load_checkpoint(checkpoint)


def test_trailing_bytes(checkpoint):
    checkpoint.write_bytes(checkpoint.read_bytes() + b"\x00")
    with pytest.raises(CheckpointError):
        load_checkpoint(checkpoint)


def test_save_needs_a_network(tmp_path):
    with pytest.raises(TypeError):
        save_checkpoint("not a network", tmp_path / "net.mdnc")
