"""
Pair sampling, the training loop, evaluation, checkpoints and the alpha sweep.
"""

import math
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

# Add src to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from stego_leak.core.errors import CheckpointError, ConfigError
from stego_leak.core.models import EarlyStopConfig, LossWeights, NetworkConfig, Precision, TrainingConfig
from stego_leak.networks.stego_networks import IdentityBackend, build_model
from stego_leak.simulators.sweep import alpha_sweep, sweep_frame, write_sweep_csv
from stego_leak.simulators.trainer import (
    EarlyStopper,
    PairSampler,
    TrainingHistory,
    config_path,
    evaluate,
    history_path,
    load_checkpoint,
    read_network_config,
    resume,
    save_checkpoint,
    train,
)

NET = NetworkConfig(branch_channels=2, image_height=8, image_width=8, cover_channels=3)


def _config(**kwargs):
    values = dict(
        batch_size=2,
        max_iterations=3,
        learning_rate=1e-3,
        precision=Precision.FLOAT64,
        early_stop=EarlyStopConfig(window=1000),
    )
    values.update(kwargs)
    return TrainingConfig(**values)


def _data(n_secrets=4, n_covers=3, seed=0):
    rng = np.random.default_rng(seed)
    secrets = []
    for _ in range(n_secrets):
        secret = (rng.uniform(size=(1, 8, 8)) < 0.3).astype(np.float64)
        secret[0, 0, 0] = 1.0
        secrets.append(secret)
    covers = [rng.uniform(size=(3, 8, 8)) for _ in range(n_covers)]
    return secrets, covers


def _params(model):
    return {name: p.data.copy() for name, p in model.named_parameters().items()}


def test_sampler_is_seeded():
    secrets, covers = _data()
    a = PairSampler(secrets, covers, seed=5).batch(20)
    b = PairSampler(secrets, covers, seed=5).batch(20)
    for (s1, c1), (s2, c2) in zip(a, b):
        assert s1 is s2 and c1 is c2


def test_sampler_cycles_secrets_and_spreads_covers():
    secrets = [np.full((1, 2, 2), float(i)) for i in range(4)]
    covers = [np.full((3, 2, 2), i / 10) for i in range(3)]
    sampler = PairSampler(secrets, covers, seed=1)

    pairs = sampler.batch(3000)
    assert sampler.drawn == 3000
    for start in range(0, 3000, 4):
        # every pass over the secrets visits each once
        assert sorted(int(s[0, 0, 0]) for s, _ in pairs[start : start + 4]) == [0, 1, 2, 3]
    counts = np.bincount([int(round(c[0, 0, 0] * 10)) for _, c in pairs], minlength=3)
    assert all(800 < n < 1200 for n in counts)


def test_sampler_needs_data():
    secrets, covers = _data()
    with pytest.raises(ConfigError):
        PairSampler([], covers)
    with pytest.raises(ConfigError):
        PairSampler(secrets, [])


def test_skip_matches_drawing():
    secrets, covers = _data()
    drawn = PairSampler(secrets, covers, seed=2)
    drawn.batch(7)
    skipped = PairSampler(secrets, covers, seed=2)
    skipped.skip(7)
    for (s1, c1), (s2, c2) in zip(drawn.batch(5), skipped.batch(5)):
        assert s1 is s2 and c1 is c2


def test_early_stopper_windows():
    stopper = EarlyStopper(EarlyStopConfig(window=2, min_rel_improvement=1e-4))
    assert [stopper.update(v) for v in (4.0, 3.0, 2.0, 1.0)] == [False, False, False, False]

    flat = EarlyStopper(EarlyStopConfig(window=2, min_rel_improvement=1e-4))
    assert [flat.update(1.0) for _ in range(4)] == [False, False, False, True]


def test_single_iteration_steps_adam_once():
    secrets, covers = _data()
    model = build_model(NET, seed=0)
    before = _params(model)
    result = train(model, PairSampler(secrets, covers, seed=0), _config(max_iterations=1), progress=False)

    assert result.iteration == 1
    assert result.optimizer.step_count == 1
    assert len(result.history) == 1
    assert any(not np.array_equal(before[name], p.data) for name, p in model.named_parameters().items())


def test_training_is_deterministic():
    secrets, covers = _data()
    runs = []
    for _ in range(2):
        model = build_model(NET, seed=3)
        result = train(model, PairSampler(secrets, covers, seed=3), _config(), progress=False)
        runs.append((result.history.losses, _params(model)))
    assert runs[0][0] == runs[1][0]
    for name in runs[0][1]:
        np.testing.assert_array_equal(runs[0][1][name], runs[1][1][name])


def test_training_reduces_loss_on_a_fixed_pair():
    secrets, covers = _data(n_secrets=1, n_covers=1)
    model = build_model(NET, seed=1)
    config = _config(batch_size=1, max_iterations=30, learning_rate=1e-2)
    result = train(model, PairSampler(secrets, covers, seed=0), config, progress=False)
    assert result.history.losses[-1] < result.history.losses[0]


def test_plateau_stops_early():
    secrets, covers = _data(n_secrets=1, n_covers=1)
    model = build_model(NET, seed=0)
    config = _config(
        batch_size=1,
        max_iterations=50,
        learning_rate=1e-12,
        early_stop=EarlyStopConfig(window=2, min_rel_improvement=1e-4),
    )
    result = train(model, PairSampler(secrets, covers, seed=0), config, progress=False)
    assert result.stopped_early
    assert result.iteration == 4


def test_history_rejects_non_increasing_iterations(tmp_path):
    history = TrainingHistory()
    history.append(1, 3.0, 2.0, 1.0)
    with pytest.raises(ConfigError):
        history.append(1, 3.0, 2.0, 1.0)

    history.append(2, 0.1 + 0.2, 1 / 3, 2 / 3)
    path = tmp_path / "history.csv"
    history.to_csv(path)
    assert TrainingHistory.from_csv(path) == history


def test_identity_backend_scores_perfectly():
    secrets, covers = _data()
    report = evaluate(IdentityBackend(), 5, PairSampler(secrets, covers, seed=0), payload_dims=20)
    assert report.psnr_db == math.inf
    assert report.ssim == pytest.approx(1.0)
    assert report.bacc == 1.0
    assert report.n_pairs == 5
    assert report.bpp == pytest.approx(20 / (3 * 8 * 8))


def test_evaluate_trained_model_reports_finite_metrics():
    secrets, covers = _data()
    model = build_model(NET, seed=0)
    report = evaluate(model, 3, PairSampler(secrets, covers, seed=1), weights=LossWeights(0.5, 1.0))
    assert math.isfinite(report.psnr_db)
    assert report.ssim <= 1.0
    assert 0.0 <= report.bacc <= 1.0
    assert report.loss_all == pytest.approx(0.5 * report.loss_mse + report.loss_bce)
    # without a known D the whole secret image counts
    assert report.bpp == pytest.approx(64 / (3 * 64))


def test_save_load_save_is_byte_identical(tmp_path):
    secrets, covers = _data()
    model = build_model(NET, seed=0, dtype=np.float32)
    config = _config(precision=Precision.FLOAT32, max_iterations=2)
    result = train(model, PairSampler(secrets, covers, seed=0), config, progress=False)

    first = tmp_path / "first.ckpt"
    save_checkpoint(model, first, result.history, result.optimizer, result.iteration)
    assert config_path(first).exists() and history_path(first).exists()

    loaded = load_checkpoint(first)
    assert loaded.model.dtype == np.float32
    assert loaded.iteration == 2
    second = tmp_path / "second.ckpt"
    save_checkpoint(loaded.model, second, loaded.history, loaded.optimizer(config), loaded.iteration)

    assert first.read_bytes() == second.read_bytes()
    assert config_path(first).read_text() == config_path(second).read_text()
    assert history_path(first).read_text() == history_path(second).read_text()


def test_load_rejects_mismatched_checkpoint(tmp_path):
    path = tmp_path / "model.ckpt"
    save_checkpoint(build_model(NET, seed=0), path)
    config_path(path).write_text(
        "branch_channels=3\nimage_height=8\nimage_width=8\ncover_channels=3\nprecision=64\n"
    )
    with pytest.raises(CheckpointError):
        load_checkpoint(path)

    config_path(path).unlink()
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_checkpoint_sidecar_holds_network_keys(tmp_path):
    path = tmp_path / "model.ckpt"
    save_checkpoint(build_model(NET, seed=0, dtype=np.float32), path)
    assert config_path(path).read_text(encoding="utf-8") == (
        "branch_channels=2\nimage_height=8\nimage_width=8\ncover_channels=3\nprecision=32\n"
    )
    assert read_network_config(path) == (NET, Precision.FLOAT32)

    config_path(path).write_text("branch_channels=2\nimage_height=8\nimage_width=8\nprecision=32\n")
    with pytest.raises(CheckpointError, match="cover_channels"):
        read_network_config(path)

    config_path(path).write_text(
        "branch_channels=2\nimage_height=8\nimage_width=8\ncover_channels=3\nprecision=16\n"
    )
    with pytest.raises(CheckpointError):
        read_network_config(path)


def test_resume_matches_uninterrupted_run(tmp_path):
    secrets, covers = _data()
    full_config = _config(max_iterations=4)

    model = build_model(NET, seed=7)
    uninterrupted = train(model, PairSampler(secrets, covers, seed=7), full_config, progress=False)

    model = build_model(NET, seed=7)
    partial = train(model, PairSampler(secrets, covers, seed=7), _config(max_iterations=2), progress=False)
    path = tmp_path / "partial.ckpt"
    save_checkpoint(model, path, partial.history, partial.optimizer, partial.iteration)

    resumed = resume(path, PairSampler(secrets, covers, seed=7), full_config, progress=False)
    assert resumed.iteration == 4
    assert resumed.history.losses == uninterrupted.history.losses
    for name, param in resumed.model.named_parameters().items():
        np.testing.assert_array_equal(param.data, uninterrupted.model.named_parameters()[name].data)


def test_alpha_sweep_rows(tmp_path):
    secrets, covers = _data()
    alphas = [0.2, 0.5, 0.8, 1.0]
    results = alpha_sweep(
        _config(max_iterations=1),
        NET,
        alphas,
        train_sampler=lambda seed: PairSampler(secrets, covers, seed=seed, payload_dims=30),
        eval_sampler=lambda seed: PairSampler(secrets, covers, seed=seed + 1, payload_dims=30),
        eval_pairs=2,
    )
    assert [r.alpha for r in results] == alphas
    assert all(r.report.alpha == a for r, a in zip(results, alphas))
    assert all(r.spread["PSNR"] == 0.0 for r in results)

    path = tmp_path / "sweep.csv"
    write_sweep_csv(results, path)
    frame = pd.read_csv(path)
    assert len(frame) == 4
    assert frame["alpha"].tolist() == alphas
    assert "BACC_std" in frame.columns
    assert frame["BPP"].iloc[0] == pytest.approx(30 / (3 * 8 * 8))


def test_sweep_with_repeated_seeds_reports_spread():
    secrets, covers = _data()
    results = alpha_sweep(
        _config(max_iterations=1),
        NET,
        [0.5],
        train_sampler=lambda seed: PairSampler(secrets, covers, seed=seed),
        eval_sampler=lambda seed: PairSampler(secrets, covers, seed=seed + 1),
        seeds=[0, 10],
        eval_pairs=2,
    )
    assert len(results[0].runs) == 2
    assert results[0].report.n_pairs == 4
    assert results[0].spread["L_all"] >= 0.0
    assert list(sweep_frame(results).columns)[:9] == [
        "BPP", "alpha", "beta", "L_all", "L_mse", "L_bce", "PSNR", "SSIM", "BACC",
    ]
