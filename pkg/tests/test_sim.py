import dataclasses
import warnings

import numpy as np
import pytest

from lidarhmp import dataset, sim, synth
from lidarhmp.pcops import K_PARTS, NOISE

import oracles

GRID = sim.ScanConfig(n_azimuth=180, n_elevation=24, elevation_range=(-0.5, 0.3))


def random_body_mesh(rng, segments=4):
    kind = sim.MOTION_KINDS[int(rng.integers(len(sim.MOTION_KINDS)))]
    local = sim.make_motion(kind, 3, seed=int(rng.integers(1000)))[int(rng.integers(3))]
    pose = sim.place(local, rng.uniform(3, 8), rng.uniform(0, 2 * np.pi), rng.uniform(0, 2 * np.pi))
    return sim.skin_rig(sim.default_rig(), pose, segments)


def random_soup(rng, n_tri=40):
    center = np.array([rng.uniform(-2, 2), rng.uniform(2, 5), rng.uniform(1, 3)])
    verts = center + rng.normal(scale=0.6, size=(3 * n_tri, 3))
    tris = np.arange(3 * n_tri).reshape(n_tri, 3)
    n = np.cross(verts[tris[:, 1]] - verts[tris[:, 0]], verts[tris[:, 2]] - verts[tris[:, 0]])
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    return sim.LabeledMesh(verts, tris, rng.integers(0, K_PARTS, n_tri).astype(np.uint8), n)


def full_grid_dirs(cfg):
    tt, pp = np.meshgrid(cfg.azimuths(), cfg.elevations(), indexing="ij")
    return sim.beam_direction(tt.reshape(-1), pp.reshape(-1))


@pytest.mark.parametrize("i", range(24))
def test_ray_cast_matches_all_triangle_oracle(i):
    rng = np.random.default_rng(100 + i)
    mesh = random_soup(rng) if i % 4 == 3 else random_body_mesh(rng)
    frame = sim.ray_cast(mesh, GRID, timestamp=0.5)
    t, tri = oracles.cast_all_triangles(mesh.vertices, mesh.triangles, np.array(GRID.center),
                                        full_grid_dirs(GRID), GRID.max_range)
    hit = tri >= 0
    assert hit.sum() > 0
    np.testing.assert_array_equal(frame.tri_index, tri[hit])
    expect = np.array(GRID.center) + t[hit, None] * full_grid_dirs(GRID)[hit]
    np.testing.assert_allclose(frame.points, expect, atol=1e-9)
    np.testing.assert_array_equal(frame.labels, mesh.tri_part[tri[hit]])


def test_default_rig_is_valid_tree():
    rig = sim.default_rig()
    rig.validate()
    assert len(rig.bones) == 23
    assert set(rig.part_of_bone[1:].tolist()) == set(range(K_PARTS))


def test_rig_cycle_rejected():
    rig = sim.default_rig()
    parent = rig.parent.copy()
    parent[3] = 6
    with pytest.raises(sim.ConfigurationError, match="cycle"):
        dataclasses.replace(rig, parent=parent).validate()


def test_degenerate_bone():
    pose = sim.default_rig().joints.copy()
    pose[4] = pose[1]
    with pytest.raises(sim.DegenerateBoneError, match="left_hip"):
        sim.skin_rig(sim.default_rig(), pose)


def test_mesh_normals_face_outward_and_triangle_count():
    rig = sim.default_rig()
    mesh = sim.skin_rig(rig, rig.joints, 8)
    assert len(mesh.triangles) == 23 * sim.capsule_triangle_count(8)
    np.testing.assert_allclose(np.linalg.norm(mesh.tri_normal, axis=1), 1.0)


def test_scan_density_at_distance():
    joints = sim.place(sim.default_rig().joints, 20.0, 0.3, 0.0)
    mesh = sim.skin_rig(sim.default_rig(), joints)
    n = len(sim.ray_cast(mesh, sim.ScanConfig()).points)
    assert 15 <= n <= 60  # sparse far-range returns


def test_motion_kinds_and_errors():
    for kind in sim.MOTION_KINDS:
        m = sim.make_motion(kind, 5, seed=1)
        assert m.shape == (5, 24, 3) and np.isfinite(m).all()
    np.testing.assert_array_equal(sim.make_motion("walk", 4, seed=2), sim.make_motion("walk", 4, seed=2))
    with pytest.raises(sim.ConfigurationError):
        sim.make_motion("dance", 3)


def _frame(seed=0):
    joints = sim.place(sim.default_rig().joints, 7.0, 0.0, 0.0)
    mesh = sim.skin_rig(sim.default_rig(), joints)
    return sim.ray_cast(mesh, sim.ScanConfig(), joints)


def test_inject_noise_shell():
    f = _frame()
    out = sim.inject_noise(f, 30, 0.3, seed=4)
    noise = out.points[out.labels == NOISE]
    assert len(noise) == 30 and len(out.points) == len(f.points) + 30
    lo, hi = f.points.min(0), f.points.max(0)
    assert np.all(noise >= lo - 0.3) and np.all(noise <= hi + 0.3)
    assert not np.all((noise >= lo) & (noise <= hi), axis=1).any()
    np.testing.assert_array_equal(out.points[: len(f.points)], f.points)


def test_inject_noise_on_empty_frame_warns():
    empty = sim.ScanFrame(np.zeros((0, 3)), np.zeros(0, np.uint8), np.zeros((24, 3)))
    with pytest.warns(sim.AugmentationWarning):
        out = sim.inject_noise(empty, 10, seed=0)
    assert out.flags["noise_skipped"] and len(out.points) == 0


def test_inject_occlusion_clears_cube():
    f = _frame()
    out = sim.inject_occlusion(f, 0.4, seed=9)
    c = np.array(out.flags["occlusion_center"])
    assert len(out.points) < len(f.points)
    assert not np.all(np.abs(out.points - c) <= 0.2, axis=1).any()
    with pytest.raises(sim.ConfigurationError):
        sim.inject_occlusion(f, 0.0)


def test_n_augmented():
    assert [sim.n_augmented(r, 4) for r in (0, 0.2, 0.4, 0.8, 1.0)] == [0, 1, 2, 4, 4]
    assert sim.n_augmented(0.7, 10) == 7


def test_sequence_round_trip_bit_exact(tmp_path):
    frames = [_frame(), sim.ScanFrame(np.zeros((0, 3)), np.zeros(0, np.uint8), np.ones((24, 3)), 0.1)]
    path = tmp_path / "a.lhmp"
    dataset.write_sequence(path, frames, 10.0)
    fps, back = dataset.read_sequence(path)
    assert fps == 10.0 and len(back) == 2
    for a, b in zip(frames, back):
        assert a.points.astype("<f4").tobytes() == b.points.astype("<f4").tobytes()
        np.testing.assert_array_equal(a.labels, b.labels)
    dataset.write_sequence(tmp_path / "b.lhmp", back, fps)
    assert path.read_bytes() == (tmp_path / "b.lhmp").read_bytes()


def test_decode_errors_report_offsets():
    buf = dataset.encode_sequence([_frame()], 10.0)
    with pytest.raises(dataset.FormatError, match="byte"):
        dataset.decode_sequence(buf[:-5])
    with pytest.raises(dataset.FormatError, match="magic"):
        dataset.decode_sequence(b"XXXX" + buf[4:])
    with pytest.raises(dataset.FormatError, match="trailing"):
        dataset.decode_sequence(buf + b"\0")


def test_synth_params_validation():
    with pytest.raises(sim.ConfigurationError):
        synth.SynthParams(noise_frame_ratio=1.5).validate()
    with pytest.raises(sim.ConfigurationError):
        synth.SynthParams(kinds=("moonwalk",)).validate()


def test_generate_sequence_deterministic_and_augmented():
    p = synth.SynthParams(n_sequences=1, frames_per_sequence=5, seed=3,
                          noise_frame_ratio=0.4, occl_frame_ratio=0.2)
    f1, e1 = synth.generate_sequence(p, 0)
    f2, e2 = synth.generate_sequence(p, 0)
    assert e1 == e2
    assert len(e1["noise_frames"]) == 2 and len(e1["occluded_frames"]) == 1
    for a, b in zip(f1, f2):
        np.testing.assert_array_equal(a.points, b.points)
    for i in e1["noise_frames"]:
        assert (f1[i].labels == NOISE).sum() == p.n_noise


def test_synth_dataset_twice_is_byte_identical(tmp_path):
    p = synth.SynthParams(n_sequences=2, frames_per_sequence=2, seed=5)
    synth.synth_dataset(tmp_path / "a", p)
    synth.synth_dataset(tmp_path / "b", p)
    names = sorted(x.name for x in (tmp_path / "a").iterdir())
    assert names == sorted(x.name for x in (tmp_path / "b").iterdir())
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()
