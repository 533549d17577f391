"""End-to-end package API tests."""

# SPDX-License-Identifier: Apache-2.0

from pathlib import Path

import numpy as np
import pytest

import mdtracker
from mdtracker import (
    BoundingBox,
    evaluate,
    generate_sequence,
    MDNet,
    MDNetConfig,
    OnlineTracker,
    PretrainConfig,
    SyntheticSequenceSpec,
    TrackerConfig,
)
from mdtracker.cli import cli_main
from tests.utils import fast_tracker_config


PRETRAIN_SETTINGS = """\
pos_per_batch = 4
neg_per_batch = 12
frame_pos = 10
frame_neg = 30
"""

TRACKER_SETTINGS = """\
num_candidates = 32
init_iters = 3
update_iters = 1
first_frame_pos = 30
first_frame_neg = 60
frame_pos = 10
frame_neg = 20
m_plus = 8
m_hard = 16
m_neg_pool = 32
regression_samples = 40
regression_lambda = 10
"""


# Helper functions
def synthesize(directory: Path, seed: int, num_frames: int = 4) -> Path:
    spec = directory / f"spec_{seed}.cfg"
    spec.write_text(
        f"num_frames = {num_frames}\nwidth = 96\nheight = 72\n"
        f"object_size = 24x18\nvelocity = 1 1\nseed = {seed}\n"
    )
    out = directory / "data" / f"seq{seed}"
    assert cli_main(["synth", "--spec", str(spec), "--out", str(out)]) == 0
    return out


def pretrained_checksum(seed: int) -> str:
    rng = np.random.default_rng(seed)
    sequences = [
        generate_sequence(SyntheticSequenceSpec(num_frames=2, seed=domain))
        for domain in range(2)
    ]
    cfg = PretrainConfig(
        iterations=2, pos_per_batch=4, neg_per_batch=8, frame_pos=8, frame_neg=16
    )
    datasets = [
        mdtracker.build_domain_dataset(sequence, rng, domain, cfg)
        for domain, sequence in enumerate(sequences)
    ]
    net = MDNet(MDNetConfig.desk(num_domains=2, init_scheme="fan_in"), rng)
    mdtracker.pretrain(net, datasets, cfg, rng)
    return net.shared_checksum()


# Happy path tests
def test_top_level_exports():
    for name in (
        "BoundingBox",
        "MDNet",
        "OnlineTracker",
        "TrackerConfig",
        "evaluate",
        "load_checkpoint",
        "save_checkpoint",
        "pretrain",
        "track_sequence",
        "run_with_reinitialization",
    ):
        assert hasattr(mdtracker, name)


def test_same_seed_same_pretrained_network():
    assert pretrained_checksum(3) == pretrained_checksum(3)


def test_different_seeds_give_different_networks():
    assert pretrained_checksum(3) != pretrained_checksum(4)


@pytest.mark.slow
def test_tracking_api_on_a_synthetic_sequence():
    sequence = generate_sequence(SyntheticSequenceSpec(num_frames=5, seed=8))
    net = MDNet(MDNetConfig.desk(init_scheme="fan_in"), np.random.default_rng(0))
    tracker = OnlineTracker(net, fast_tracker_config(), np.random.default_rng(0))
    result = tracker.track(sequence.frames, sequence.groundtruth[0])

    assert len(result.boxes) == 5
    assert all(isinstance(box, BoundingBox) for box in result.boxes)
    curves = evaluate(result.boxes, sequence.groundtruth)
    assert 0.0 <= curves.auc <= 1.0
    assert isinstance(TrackerConfig(), TrackerConfig)


@pytest.mark.slow
def test_synth_pretrain_track_eval(tmp_path):
    synthesize(tmp_path, seed=1)
    seq_dir = synthesize(tmp_path, seed=2)
    pretrain_cfg = tmp_path / "pretrain.cfg"
    pretrain_cfg.write_text(PRETRAIN_SETTINGS)
    tracker_cfg = tmp_path / "tracker.cfg"
    tracker_cfg.write_text(TRACKER_SETTINGS)
    model = tmp_path / "out" / "model.mdnc"
    results = tmp_path / "out" / "results.txt"
    curve = tmp_path / "out" / "success.csv"

    exit_code = cli_main(
        [
            "pretrain",
            "--data",
            str(tmp_path / "data"),
            "--out",
            str(model),
            "--iters",
            "4",
            "--seed",
            "0",
            "--config",
            str(pretrain_cfg),
        ]
    )
    assert exit_code == 0
    assert model.is_file()
    losses = (tmp_path / "out" / "model_losses.csv").read_text().splitlines()
    assert losses[0] == "iteration,domain,loss"
    assert [line.split(",")[1] for line in losses[1:]] == ["0", "1", "0", "1"]

    exit_code = cli_main(
        [
            "track",
            "--model",
            str(model),
            "--seq",
            str(seq_dir),
            "--out",
            str(results),
            "--seed",
            "0",
            "--config",
            str(tracker_cfg),
        ]
    )
    assert exit_code == 0
    assert len(results.read_text().splitlines()) == 4

    exit_code = cli_main(
        [
            "eval",
            "--results",
            str(results),
            "--gt",
            str(seq_dir / "groundtruth_rect.txt"),
            "--out",
            str(curve),
        ]
    )
    assert exit_code == 0
    assert curve.is_file()


@pytest.mark.slow
def test_same_seed_same_result_file(tmp_path):
    seq_dir = synthesize(tmp_path, seed=5, num_frames=5)
    net = MDNet(MDNetConfig.desk(init_scheme="fan_in"), np.random.default_rng(0))
    model = mdtracker.save_checkpoint(net, tmp_path / "net.mdnc")
    settings = tmp_path / "tracker.cfg"
    settings.write_text(TRACKER_SETTINGS)

    outputs = []
    for run in range(2):
        results = tmp_path / f"results_{run}.txt"
        exit_code = cli_main(
            [
                "track",
                "--model",
                str(model),
                "--seq",
                str(seq_dir),
                "--out",
                str(results),
                "--seed",
                "7",
                "--config",
                str(settings),
            ]
        )
        assert exit_code == 0
        outputs.append(results.read_bytes())

    assert len(outputs[0].splitlines()) == 5
    assert outputs[0] == outputs[1]
