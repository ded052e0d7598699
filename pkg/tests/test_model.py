import dataclasses

import numpy as np
import pytest

from lidarhmp import model as M
from lidarhmp.autodiff import ShapeError, no_grad
from lidarhmp.checks import end_to_end_check, micro_batch
from lidarhmp.pcops import NOISE


def expected_shapes(cfg, b):
    K, T, To = cfg.k_parts, cfg.t_total, cfg.t_obs
    return {
        "descriptor": (b, To, K + 1, cfg.d1),
        "mapped": (b, T, K + 1, cfg.d1),
        "refined": (b, T, K + 1, cfg.d1),
        "coarse_joints": (b, T, 24, 3),
        "joint_embed": (b, T, 24, cfg.d2),
        "feat_embed": (b, T, K + 1, cfg.d2),
        "tokens": (b, T, K + 25, cfg.d2),
        "final_joints": (b, T, 24, 3),
        "pred_points": (b, T, K, 32, 3),
    }


@pytest.mark.parametrize("cfg", [M.DESK, M.PAPER, M.MICRO], ids=["desk", "paper", "micro"])
def test_intermediate_shapes(cfg):
    batch = micro_batch(cfg, batch=1)
    params = M.init_params(cfg, 0)
    with no_grad():
        out = M.forward(batch, params, cfg)
    got = {f.name: getattr(out, f.name).shape for f in dataclasses.fields(out) if f.name != "extras"}
    got.update({k: v.shape for k, v in out.extras.items()})
    assert got == expected_shapes(cfg, 1)


def _perm_batch(batch, rng):
    perm = rng.permutation(batch.points.shape[2])
    return M.Batch(batch.points[:, :, perm], batch.member[..., perm], batch.present)


def test_descriptor_point_permutation_invariant():
    cfg = M.MICRO
    params = M.init_params(cfg, 1, np.float64)
    batch = micro_batch(cfg, seed=2)
    rng = np.random.default_rng(0)
    with no_grad():
        raw = M.raw_descriptor(batch, params, cfg).data
        for _ in range(5):
            other = M.raw_descriptor(_perm_batch(batch, rng), params, cfg).data
            np.testing.assert_allclose(other, raw, atol=1e-6)
        full = M.forward(batch, params, cfg).final_joints.data
        np.testing.assert_allclose(M.forward(_perm_batch(batch, rng), params, cfg).final_joints.data,
                                   full, atol=1e-6)


def test_part_pool_matches_loops():
    rng = np.random.default_rng(3)
    feats = rng.normal(size=(2, 7, 5))
    member = rng.random((2, 4, 7)) > 0.6
    member[0, 1] = False
    from lidarhmp.autodiff import Tensor
    got = M.part_pool(Tensor(feats), member).data
    for b in range(2):
        for k in range(4):
            idx = np.flatnonzero(member[b, k])
            want = feats[b, idx].max(0) if len(idx) else np.zeros(5)
            np.testing.assert_array_equal(got[b, k], want)


def test_empty_parts_and_noise_frames_stay_finite():
    cfg = M.MICRO
    params = M.init_params(cfg, 0, np.float64)
    batch = micro_batch(cfg)
    batch.member[:, 0] = False  # whole observed frame is noise / empty
    batch.present[:, 0] = False
    batch.cloud_mask[:] = False
    out = M.forward(batch, params, cfg)
    parts = M.loss_total(out, batch, cfg)
    parts.total.backward()
    assert np.isfinite(parts.total.data) and parts.skipped_frames == cfg.t_total * len(batch)
    assert all(np.isfinite(t.grad).all() for _, t in params.items() if t.grad is not None)


def test_sample_without_labeled_points_is_rejected():
    cfg = M.MICRO
    batch = micro_batch(cfg)
    batch.member[0] = False
    batch.present[0] = False
    with pytest.raises(ValueError, match="no labeled points"):
        M.forward(batch, M.init_params(cfg), cfg)


def test_end_to_end_gradient_matches_finite_differences():
    errs = end_to_end_check(coords=2)
    assert len(errs) == len(M.init_params(M.MICRO))
    assert max(errs.values()) <= 1e-4


def test_chamfer_loss_matches_pcops():
    from lidarhmp import pcops
    from lidarhmp.autodiff import Tensor
    rng = np.random.default_rng(0)
    pred = rng.normal(size=(2, 3, 10, 3))
    clouds = rng.normal(size=(2, 3, 6, 3))
    mask = rng.random((2, 3, 6)) > 0.3
    mask[1, 2] = False
    loss, skipped = M.chamfer_loss(Tensor(pred), clouds, mask)
    assert skipped == 1
    for b in range(2):
        want = sum(pcops.chamfer(pred[b, t], clouds[b, t][mask[b, t]])
                   for t in range(3) if mask[b, t].any())
        assert loss.data[b] == pytest.approx(want, rel=1e-9)


def test_wta_trains_only_winners():
    cfg = dataclasses.replace(M.MICRO, m_hypotheses=3)
    params = M.init_params(cfg, 0, np.float64)
    batch = micro_batch(cfg)
    outs = M.forward_diverse(batch, params, cfg)
    parts = M.wta_loss(outs, batch, cfg)
    parts.total.backward()
    scores = np.stack([M.future_mpjpe(o.final_joints.data, batch.gt_joints, cfg) for o in outs], 1)
    np.testing.assert_array_equal(parts.winners, scores.argmin(1))
    for m in range(3):
        g = params[f"query.{m}"].grad
        trained = g is not None and np.abs(g).max() > 0
        assert trained == (m in parts.winners)


def test_wta_single_hypothesis_equals_plain_loss():
    cfg = M.MICRO
    params = M.init_params(cfg, 0, np.float64)
    batch = micro_batch(cfg)
    a = M.wta_loss(M.forward_diverse(batch, params, cfg), batch, cfg).total.data
    b = M.loss_total(M.forward(batch, params, cfg), batch, cfg).total.data
    assert a == b


def test_init_is_seeded():
    a, b = M.init_params(M.MICRO, 4), M.init_params(M.MICRO, 4)
    assert all(np.array_equal(a[n].data, b[n].data) for n in a)
    c = M.init_params(M.MICRO, 5)
    assert not np.array_equal(a["pointnet.0.w"].data, c["pointnet.0.w"].data)


def test_check_params_names_mismatch():
    params = M.init_params(M.MICRO)
    with pytest.raises(ShapeError, match="'desc.pos'"):
        M.check_params(params, dataclasses.replace(M.MICRO, t_obs=3))


def test_config_json_round_trip_and_validation():
    assert M.ModelConfig.from_json(M.DESK.to_json()) == M.DESK
    with pytest.raises(ValueError, match="divisible"):
        dataclasses.replace(M.DESK, d1=127).validate()

