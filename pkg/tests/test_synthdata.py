import numpy as np
import pytest

from visa_skill.synthdata import (
    SynthConfig,
    config_with,
    generate_dataset,
    generate_episode,
    load_dataset,
    mean_squared_jerk,
    read_episode,
    score_from_jerk,
    score_from_tracks,
    user_noise_levels,
    write_dataset,
    write_episode,
)

SMALL = SynthConfig(frame_size=32, frame_count=24, seed=4)


def test_same_seed_same_episode():
    a = generate_episode(SMALL, 3)
    b = generate_episode(SMALL, 3)
    assert a.frames.tobytes() == b.frames.tobytes()
    assert a.tool_tracks.tobytes() == b.tool_tracks.tobytes()
    assert a.score == b.score
    assert generate_episode(SMALL, 4).frames.tobytes() != a.frames.tobytes()


def test_zero_noise_scores_top():
    ep = generate_episode(SMALL, 0, noise=0.0)
    assert ep.score == 30.0


def test_midpoint_jerk_scores_middle():
    ep = generate_episode(SMALL, 1, noise=1.0)
    msj = mean_squared_jerk(ep.tool_tracks)
    mid_cfg = config_with(SMALL, jerk_mid=msj)
    again = generate_episode(mid_cfg, 1, noise=1.0)
    assert again.tool_tracks.tobytes() == ep.tool_tracks.tobytes()
    assert again.score == pytest.approx(18.0, abs=1e-12)


def test_score_mapping_clamped_and_decreasing():
    assert score_from_jerk(0.0, 10.0) == 30.0
    assert score_from_jerk(10.0, 10.0) == 18.0
    assert score_from_jerk(1e9, 10.0) == 6.0
    vals = [score_from_jerk(j, 10.0) for j in np.linspace(0, 20, 21)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_jerk_by_hand():
    tracks = np.zeros((5, 1, 2))
    tracks[:, 0, 0] = [0, 0, 0, 1, 0]
    # third differences of (0,0,0,1,0): (1, -3)
    assert mean_squared_jerk(tracks) == pytest.approx(5.0)


def test_dataset_structure():
    eps, names = generate_dataset(SMALL, 4, 5)
    assert len(eps) == 20 and len(names) == 20
    for r in range(5):
        assert sum(e.supertrial_id == r for e in eps) == 4
    assert sorted({e.user_id for e in eps}) == [0, 1, 2, 3]


def test_user_means_ordered():
    eps, _ = generate_dataset(config_with(SMALL, seed=0), 4, 8)
    means = [np.mean([e.score for e in eps if e.user_id == u]) for u in range(4)]
    assert all(a > b for a, b in zip(means, means[1:]))


def test_noise_levels_even_in_variance():
    lv = user_noise_levels(SynthConfig(), 5)
    assert lv[0] == pytest.approx(0.5) and lv[-1] == pytest.approx(2.5)
    np.testing.assert_allclose(np.diff(lv**2), (2.5**2 - 0.5**2) / 4)


def test_dataset_needs_two_users():
    with pytest.raises(ValueError):
        generate_dataset(SMALL, 1, 5)


def test_score_rederived_from_tracks(tmp_path):
    eps, names = generate_dataset(SMALL, 2, 3)
    write_dataset(eps, names, tmp_path)
    back, _ = load_dataset(tmp_path)
    for e in back:
        assert abs(score_from_tracks(e.tool_tracks, SMALL) - e.score) <= 1e-9


def test_episode_roundtrip(tmp_path):
    ep = generate_episode(SMALL, 7)
    write_episode(ep, tmp_path / "ep")
    back = read_episode(tmp_path / "ep")
    assert back.frames.tobytes() == ep.frames.tobytes()
    assert back.tool_tracks.tobytes() == ep.tool_tracks.tobytes()
    assert (back.score, back.user_id, back.supertrial_id, back.task_id) == \
        (ep.score, ep.user_id, ep.supertrial_id, ep.task_id)
    meta = (tmp_path / "ep" / "meta.txt").read_text()
    assert "frame_count=24" in meta and "width=32" in meta


def test_blob_centered_on_track():
    cfg = SynthConfig(frame_size=48, frame_count=8, tool_count=1, seed=2)
    plain = generate_episode(config_with(cfg, tool_level=0.0), 0, noise=0.5)
    ep = generate_episode(cfg, 0, noise=0.5)
    rows, cols = np.mgrid[0:48, 0:48]
    for t in range(8):
        # the tool's own contribution: frame minus the same frame rendered without a bright tool
        w = ep.frames[t].astype(float) - plain.frames[t].astype(float)
        w[w < 0] = 0
        u = (w * cols).sum() / w.sum()
        v = (w * rows).sum() / w.sum()
        assert np.hypot(u - ep.tool_tracks[t, 0, 0], v - ep.tool_tracks[t, 0, 1]) < 0.5
