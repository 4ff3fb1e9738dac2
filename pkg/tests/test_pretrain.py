import json

import numpy as np
import pytest

from tsvforge.data import normalize, split_by_ratio
from tsvforge.encoder import EncoderConfig, EncoderParams
from tsvforge.errors import ConfigurationError, ContractViolation, DivergenceError
from tsvforge.harness import synth_series
from tsvforge.objectives import MsmConfig
from tsvforge.pretrain import Adam, PretrainConfig, Pretrainer, make_windows, pretrain, sample_crops

SMALL = EncoderConfig(input_dim=1, hidden_dim=8, output_dim=16, depth=3)


def sinusoid_batch(B=8, L=48, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(L)
    phases = rng.uniform(0, 2 * np.pi, B)
    return np.sin(2 * np.pi * t[None, :] / 24 + phases[:, None])[:, None, :]


def test_crops_t2():
    rng = np.random.default_rng(0)
    for _ in range(200):
        a1, b1, a2, b2 = sample_crops(2, rng)
        assert 0 <= a1 <= a2 < b1 <= b2 <= 2


def test_crops_cover_all_overlaps_and_keep_order():
    rng = np.random.default_rng(1)
    lengths = set()
    for _ in range(10_000):
        a1, b1, a2, b2 = sample_crops(100, rng)
        assert 0 <= a1 <= a2 < b1 <= b2 <= 100
        lengths.add(b1 - a2)
    assert min(lengths) == 1 and max(lengths) == 100


def test_crops_deterministic():
    a = [sample_crops(50, r) for r in [np.random.default_rng(3)] for _ in range(20)]
    b = [sample_crops(50, r) for r in [np.random.default_rng(3)] for _ in range(20)]
    assert a == b


def test_crops_reject_short():
    with pytest.raises(ContractViolation):
        sample_crops(1, np.random.default_rng(0))


def test_config_validation():
    with pytest.raises(ConfigurationError):
        PretrainConfig(n_iters=0)
    with pytest.raises(ConfigurationError):
        PretrainConfig(batch_size=0)


def test_make_windows():
    w = make_windows(np.arange(10.0)[None], 4)
    assert w.shape == (3, 1, 3)
    np.testing.assert_array_equal(w[1, 0], [3, 4, 5])


def test_adam_first_step_moves_by_lr():
    opt = Adam(lr=0.01)
    out = opt.step({"p": np.array([1.0, -1.0])}, {"p": np.array([3.0, -0.5])})
    np.testing.assert_allclose(out["p"], [0.99, -0.99], atol=1e-9)


def test_zero_lr_leaves_params_unchanged():
    tr = Pretrainer(SMALL, PretrainConfig(lr=0.0, seed=0))
    before = {k: v.copy() for k, v in tr.params.items()}
    loss = tr.train_step(sinusoid_batch())
    assert np.isfinite(loss)
    for k in before:
        np.testing.assert_array_equal(tr.params[k], before[k])


def test_same_seed_same_trajectory():
    runs = []
    for _ in range(2):
        tr = Pretrainer(SMALL, PretrainConfig(seed=11))
        losses = [tr.train_step(sinusoid_batch()) for _ in range(2)]
        runs.append((losses, tr.params))
    assert runs[0][0] == runs[1][0]
    for k in runs[0][1]:
        np.testing.assert_array_equal(runs[0][1][k], runs[1][1][k])


def test_loss_decreases_over_200_steps():
    cfg = EncoderConfig(input_dim=1)
    tr = Pretrainer(cfg, PretrainConfig(seed=0, n_iters=200))
    batch = sinusoid_batch(8, 48)
    losses = [tr.train_step(batch) for _ in range(200)]
    assert losses[-1] < losses[0]
    assert np.mean(losses[-20:]) < np.mean(losses[:20])
    assert tr.encoder_params.all_finite()


def test_one_iteration_is_one_step():
    tr = Pretrainer(SMALL, PretrainConfig(seed=0, n_iters=1, max_train_length=40))
    tr.fit(np.sin(np.arange(120) / 3.0)[None])
    assert tr.optimizer.t == 1 and len(tr.history) == 1


def test_msm_with_zero_weight_matches_plain_run():
    data = np.sin(np.arange(300) / 4.0)[None]
    plain = Pretrainer(SMALL, PretrainConfig(seed=2, n_iters=5, max_train_length=60))
    plain.fit(data)
    msm = Pretrainer(SMALL, PretrainConfig(seed=2, n_iters=5, max_train_length=60,
                                           msm=MsmConfig(lambda_max=0.0)))
    msm.fit(data)
    assert [h.loss for h in plain.history] == [h.loss for h in msm.history]
    for k, v in plain.encoder_params.named().items():
        np.testing.assert_array_equal(msm.encoder_params.named()[k], v)


def test_msm_branch_trains_decoder():
    data = np.sin(np.arange(300) / 4.0)[None]
    tr = Pretrainer(SMALL, PretrainConfig(seed=2, n_iters=6, max_train_length=60, msm=MsmConfig()))
    before = tr.params["decoder.0.weight"].copy()
    tr.fit(data)
    assert not np.array_equal(before, tr.params["decoder.0.weight"])
    assert [h.lam for h in tr.history] == [0.0, 0.5 / 3, 2 * 0.5 / 3, 0.5, 0.5, 0.5]


def test_nan_input_signals_divergence():
    tr = Pretrainer(SMALL, PretrainConfig(seed=0))
    batch = sinusoid_batch()
    batch[:, :, :] = np.nan
    with pytest.raises(DivergenceError):
        tr.train_step(batch)


def test_never_reads_validation_or_test_rows():
    ds = normalize(split_by_ratio(synth_series(400), (0.6, 0.2, 0.2)))
    ds.values[:, ds.splits[0]:] = np.nan
    params = pretrain(ds, PretrainConfig(seed=0, n_iters=5, max_train_length=60), SMALL)
    assert params.all_finite()


def test_checkpoint_and_log(tmp_path):
    data = np.sin(np.arange(200) / 5.0)[None]
    cfg = PretrainConfig(seed=4, n_iters=3, max_train_length=50)
    paths = []
    for i in range(2):
        ck, lg = tmp_path / f"e{i}.ckpt", tmp_path / f"e{i}.jsonl"
        pretrain(data, cfg, SMALL, checkpoint_path=ck, log_path=lg)
        paths.append((ck, lg))
    assert paths[0][0].read_bytes() == paths[1][0].read_bytes()
    assert paths[0][1].read_bytes() == paths[1][1].read_bytes()
    records = [json.loads(line) for line in paths[0][1].read_text().splitlines()]
    assert [r["step"] for r in records] == [0, 1, 2]
    assert all(set(r) == {"step", "loss", "lambda"} for r in records)


def test_supplied_params_are_used():
    init = EncoderParams.init(SMALL, 99)
    tr = Pretrainer(SMALL, PretrainConfig(seed=0), params=init)
    np.testing.assert_array_equal(tr.params["proj_weight"], init.proj_weight)
