import dataclasses
import json
from types import SimpleNamespace

import numpy as np
import pytest

from lidarhmp import model as M
from lidarhmp.autodiff import ShapeError, Tensor, TrainingDivergence
from lidarhmp.config import RunConfig, RunConfigError
from lidarhmp.harness import evaluate as E
from lidarhmp.harness import train as TR
from lidarhmp.harness.checkpoint import CheckpointCorruption, load_checkpoint, save_checkpoint
from lidarhmp.harness.data import (DatasetStore, Sequence, collate, load_dataset,
                                   split_by_sequence, window_samples)
from lidarhmp.pcops import ContractError
from lidarhmp.sim import ScanFrame


def fake_store(lengths):
    seqs = []
    for i, n in enumerate(lengths):
        frames = [ScanFrame(np.zeros((0, 3)), np.zeros(0, np.uint8), np.full((24, 3), 100 * i + t))
                  for t in range(n)]
        seqs.append(Sequence(frames, 10.0, {"index": i}))
    return DatasetStore(None, {}, seqs)


def test_window_counts():
    assert len(window_samples(fake_store([14]), 4, 10, 1)) == 1
    assert len(window_samples(fake_store([20]), 4, 4, 2)) == 7
    assert len(window_samples(fake_store([5]), 4, 4, 1)) == 0


def test_windows_never_cross_sequences():
    for s in window_samples(fake_store([9, 11, 8]), 2, 3, 1):
        seq_ids = {int(f.gt_joints[0, 0]) // 100 for f in s.observed_raw + s.future_raw}
        assert seq_ids == {s.meta["sequence"]}


def test_split_by_sequence_disjoint_and_seeded():
    samples = window_samples(fake_store([6] * 20), 2, 2, 1)
    tr, va = split_by_sequence(samples, 3)
    assert {s.meta["sequence"] for s in tr}.isdisjoint({s.meta["sequence"] for s in va})
    assert len({s.meta["sequence"] for s in va}) == 2
    tr2, va2 = split_by_sequence(samples, 3)
    assert [s.meta for s in va] == [s.meta for s in va2]


def test_collate_targets_are_anchor_relative(tiny_data, tiny_cfg):
    cfg = tiny_cfg.model
    samples = window_samples(load_dataset(tiny_data), cfg.t_obs, cfg.t_pred, 1, cfg.n_points)
    b = collate(samples[:3], cfg)
    assert b.points.shape == (3, cfg.t_obs, cfg.n_points, 3)
    assert b.member.shape == (3, cfg.t_obs, cfg.k_parts, cfg.n_points)
    s = samples[1]
    np.testing.assert_allclose(b.gt_joints[1, -1] + s.centroid, s.future_raw[-1].gt_joints)
    assert b.gt_clouds.shape[:3] == (3, cfg.t_total, cfg.n_points)


def test_run_config_rules(tmp_path):
    with pytest.raises(RunConfigError, match="unknown"):
        RunConfig.from_dict({"bogus": 1})
    cfg = RunConfig.from_dict({"preset": "paper", "batch": 4})
    assert cfg.model.d1 == 1024 and cfg.batch == 4 and cfg.epochs == 100
    assert RunConfig.from_dict(cfg.to_dict()) == cfg
    (tmp_path / "c.json").write_text("{not json")
    with pytest.raises(RunConfigError):
        RunConfig.load(tmp_path / "c.json")


@pytest.fixture(scope="module")
def tiny_samples(tiny_data):
    cfg = M.MICRO
    return window_samples(load_dataset(tiny_data), cfg.t_obs, cfg.t_pred, 1, cfg.n_points)


def _param_bytes(params):
    return b"".join(t.data.tobytes() for _, t in params.items())


def test_lr_zero_keeps_parameters(tiny_samples, tiny_cfg):
    cfg = tiny_cfg.replace(lr=0.0, epochs=1)
    before = _param_bytes(M.init_params(cfg.model, cfg.seed))
    res = TR.train(tiny_samples, cfg)
    assert _param_bytes(res.checkpoint.params) == before


def test_training_is_deterministic(tiny_samples, tiny_cfg, tmp_path):
    a = TR.train(tiny_samples, tiny_cfg, curve_path=tmp_path / "a.csv")
    b = TR.train(tiny_samples, tiny_cfg, curve_path=tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert _param_bytes(a.checkpoint.params) == _param_bytes(b.checkpoint.params)
    header = (tmp_path / "a.csv").read_text().splitlines()[0]
    assert header == "step,loss,l_initial,l_final,l_cd"


def test_resume_equals_uninterrupted(tiny_samples, tiny_cfg, tmp_path):
    full = TR.train(tiny_samples, tiny_cfg.replace(epochs=3))
    TR.train(tiny_samples, tiny_cfg.replace(epochs=1), out_ckpt=tmp_path / "ck")
    part = load_checkpoint(tmp_path / "ck")
    rest = TR.train(tiny_samples, tiny_cfg.replace(epochs=3), resume=part)
    assert _param_bytes(rest.checkpoint.params) == _param_bytes(full.checkpoint.params)
    assert [r["loss"] for r in rest.curve] == [r["loss"] for r in full.curve][-len(rest.curve):]


def test_checkpoint_round_trip_is_bit_exact(tiny_samples, tiny_cfg, tmp_path):
    res = TR.train(tiny_samples, tiny_cfg.replace(epochs=1))
    save_checkpoint(tmp_path / "a", res.checkpoint)
    back = load_checkpoint(tmp_path / "a")
    assert _param_bytes(back.params) == _param_bytes(res.checkpoint.params)
    assert back.rng_state == res.checkpoint.rng_state and back.adam.step == res.checkpoint.adam.step
    save_checkpoint(tmp_path / "b", back)
    for name in ("manifest.json", "params.bin"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_checkpoint_errors(tiny_cfg, tmp_path):
    ck = TR.new_checkpoint(tiny_cfg)
    save_checkpoint(tmp_path / "c", ck)
    other = tiny_cfg.replace(d2=16)
    with pytest.raises(ShapeError, match="embed_joint"):
        load_checkpoint(tmp_path / "c", other)
    blob = tmp_path / "c" / "params.bin"
    blob.write_bytes(blob.read_bytes()[:-4])
    with pytest.raises(CheckpointCorruption):
        load_checkpoint(tmp_path / "c")


def test_nan_loss_aborts_and_keeps_last_checkpoint(tiny_samples, tiny_cfg, tmp_path, monkeypatch):
    cfg = tiny_cfg.replace(batch=len(tiny_samples), epochs=5)
    real, calls = TR.batch_loss, []

    def flaky(batch, params, mcfg):
        parts = real(batch, params, mcfg)
        calls.append(1)
        if len(calls) == 3:
            parts.total = parts.total * float("nan")
        return parts

    monkeypatch.setattr(TR, "batch_loss", flaky)
    with pytest.raises(TrainingDivergence, match="step 3"):
        TR.train(tiny_samples, cfg, out_ckpt=tmp_path / "ck")
    assert load_checkpoint(tmp_path / "ck").epoch == 2


def test_horizon_mapping():
    assert [E.horizon_frame(h, 10.0) for h in (100, 400, 1000)] == [1, 4, 10]
    cfg = dataclasses.replace(M.DESK, t_pred=4)
    assert list(E.resolve_horizons(cfg, 10.0)) == [100, 200, 300, 400]
    with pytest.raises(ContractError):
        E.resolve_horizons(cfg, 10.0, [600])


def test_exact_predictions_score_zero(tiny_samples, monkeypatch):
    cfg = M.MICRO
    real_collate = E.collate
    monkeypatch.setattr(E, "collate", lambda s, c, with_targets=True: real_collate(s, c, True))
    monkeypatch.setattr(E.M, "forward_diverse",
                        lambda b, p, c: [SimpleNamespace(final_joints=Tensor(b.gt_joints))])
    rep = E.evaluate(tiny_samples, None, cfg, 10.0)
    assert set(rep["mpjpe_mm"]) == {"h100", "h200"}
    assert max(rep["mpjpe_mm"].values()) < 1e-9 and rep["avg_short"] < 1e-9


@pytest.fixture(scope="module")
def diverse(tiny_samples):
    cfg = dataclasses.replace(M.MICRO, m_hypotheses=4)
    return cfg, M.init_params(cfg, 0)


def test_report_min_over_hypotheses(tiny_samples, diverse):
    cfg, params = diverse
    rep = E.evaluate(tiny_samples, params, cfg, 10.0, seed=0)
    assert len(rep["per_hypothesis_mm"]) == 4
    for h, v in rep["min_mpjpe_mm"].items():
        assert all(v <= hyp[h] + 1e-12 for hyp in rep["per_hypothesis_mm"])
    assert rep["mpjpe_mm"]["h200"] == rep["per_hypothesis_mm"][0]["h200"]
    json.dumps(rep)


def test_evaluate_is_side_effect_free(tiny_samples, diverse):
    cfg, params = diverse
    before = _param_bytes(params)
    assert E.evaluate(tiny_samples, params, cfg, 10.0) == E.evaluate(tiny_samples, params, cfg, 10.0)
    assert _param_bytes(params) == before


def test_sweeps(tiny_samples):
    cfg = M.MICRO
    params = M.init_params(cfg, 0)
    clean = E.evaluate(tiny_samples, params, cfg, 10.0)
    for mode in ("occlusion", "noise"):
        rows = E.robustness_sweep(tiny_samples, params, cfg, 10.0, mode, [0, 20, 40, 80])
        assert [r["level"] for r in rows] == [0, 20, 40, 80]
        assert {k: rows[0][k] for k in clean["mpjpe_mm"]} == clean["mpjpe_mm"]
        assert rows[3] != rows[0]
    rows = E.robustness_sweep(tiny_samples, params, cfg, 10.0, "distance", [0, 7.5, 30])
    assert [r["bin"] for r in rows] == [[0, 7.5], [7.5, 30]]
    assert sum(r["n_samples"] for r in rows) == len(tiny_samples)
    with pytest.raises(ContractError):
        E.robustness_sweep(tiny_samples, params, cfg, 10.0, "rain", [0])
    with pytest.raises(ContractError):
        E.robustness_sweep(tiny_samples, params, cfg, 10.0, "noise", [120])


def test_sweep_levels_are_nested(tiny_samples):
    s = tiny_samples[0]
    lo = E._augment(s, 0, "occlusion", 50, 0)
    hi = E._augment(s, 0, "occlusion", 100, 0)
    changed_lo = [i for i, f in enumerate(lo.observed_raw) if f is not s.observed_raw[i]]
    changed_hi = [i for i, f in enumerate(hi.observed_raw) if f is not s.observed_raw[i]]
    assert len(changed_lo) == 1 and set(changed_lo) <= set(changed_hi) and len(changed_hi) == 2
    for i in changed_lo:
        np.testing.assert_array_equal(lo.observed_raw[i].points, hi.observed_raw[i].points)
