import json

import numpy as np
import pytest

from streid import FusionConfig, FusionMode, ValidationError, evaluate, fit, fused_score_matrix
from streid.simulate import (
    SimConfig,
    binned_mixture,
    config_from_dict,
    config_to_dict,
    default_config,
    dumps_config,
    ring_topology,
    simulate,
)

RING = ring_topology(3, [(3_000, 400, 0.6), (9_000, 400, 0.4)])


def _small(**kw):
    base = dict(camera_count=3, identities=120, topology=RING, start_horizon=2_000_000, feature_dim=16)
    base.update(kw)
    return SimConfig(**base)


def _rank1(result, mode, model=None):
    cfg = FusionConfig(mode=mode)
    scores = fused_score_matrix(result.query, result.gallery, model, cfg)
    return evaluate(scores, result.query, result.gallery).rank(1)


def test_same_seed_same_output():
    a, b = simulate(_small(seed=3)), simulate(_small(seed=3))
    for split in ("train", "query", "gallery"):
        assert getattr(a, split).detections == getattr(b, split).detections
    assert simulate(_small(seed=4)).train.detections != a.train.detections


def test_splits_are_identity_disjoint_and_labeled():
    r = simulate(_small(distractors=10))
    train_ids = set(r.train.person_ids)
    assert train_ids.isdisjoint(set(r.query.person_ids) | set(r.gallery.person_ids) - {-1})
    assert r.gallery.distractors.sum() == 10
    assert set(r.query.person_ids) <= set(r.gallery.person_ids)


def test_one_query_per_identity_and_camera():
    r = simulate(_small())
    pairs = list(zip(r.query.person_ids, r.query.cameras))
    assert len(pairs) == len(set(pairs))


def test_pure_identity_signal_is_solved_visually():
    r = simulate(_small(identity_signal=1.0, noise_std=0.0, feature_offset=0.0))
    assert _rank1(r, FusionMode.VISUAL_ONLY) == 1.0


def test_no_identity_signal_leaves_vision_at_chance():
    r = simulate(_small(identity_signal=0.0, identities=300))
    model = fit(r.train)
    vis = _rank1(r, FusionMode.VISUAL_ONLY)
    joint = _rank1(r, FusionMode.JOINT_LS, model)

    g_pid, g_cam = r.gallery.person_ids, r.gallery.cameras
    per_query = []
    for pid, cam in zip(r.query.person_ids, r.query.cameras):
        valid = ~((g_pid == pid) & (g_cam == cam))
        pos = (valid & (g_pid == pid)).sum()
        if pos:
            per_query.append(pos / valid.sum())
    chance = float(np.mean(per_query))
    spread = 3 * np.sqrt(chance * (1 - chance) / len(per_query))
    assert abs(vis - chance) <= spread + 0.01
    assert joint > vis


def test_spatial_benefit_grows_as_appearance_weakens():
    # Mean JointLS - VisualOnly rank-1 gap over five seeds, on the benchmark
    # topology.  Once vision alone is perfect the gap can dip slightly below
    # zero; from there on, weakening appearance must only widen it.
    mean_gaps = []
    for signal in (0.6, 0.3, 0.15, 0.0):
        gaps = []
        for seed in range(5):
            r = simulate(default_config(identity_signal=signal, identities=200, seed=seed))
            model = fit(r.train)
            gaps.append(_rank1(r, FusionMode.JOINT_LS, model) - _rank1(r, FusionMode.VISUAL_ONLY))
        mean_gaps.append(float(np.mean(gaps)))
    assert all(b >= a - 0.01 for a, b in zip(mean_gaps, mean_gaps[1:])), mean_gaps
    assert mean_gaps[-1] > 0.5


@pytest.mark.parametrize(
    "kw",
    [
        {"camera_count": 1, "topology": {}},
        {"topology": {}},
        {"topology": {(0, 0): ((1.0, 1.0, 1.0),)}},
        {"topology": {(0, 5): ((1.0, 1.0, 1.0),)}},
        {"topology": {(0, 1): ((1.0, 1.0, 0.5),)}},
        {"topology": {(0, 1): ((1.0, 0.0, 1.0),)}},
        {"sightings": (3, 2)},
        {"identity_signal": 1.5},
        {"identity_signal": 0.0, "noise_std": 0.0, "feature_offset": 0.0},
    ],
)
def test_invalid_configs(kw):
    with pytest.raises(ValidationError):
        _small(**kw)


def test_config_round_trip():
    cfg = default_config(seed=11, distractors=3)
    assert config_from_dict(json.loads(dumps_config(cfg))) == cfg
    assert config_from_dict(config_to_dict(cfg)) == cfg


def test_config_rejects_unknown_fields():
    with pytest.raises(ValidationError):
        config_from_dict({"cameras": 3})


def test_binned_mixture_is_normalised():
    mass = binned_mixture(RING[(0, 1)], 100, 200)
    assert mass.sum() == pytest.approx(1.0, abs=1e-12)
    assert {int(np.argmax(mass[:60])), int(np.argmax(mass[60:])) + 60} == {29, 89}


def test_default_config_is_the_benchmark():
    cfg = default_config()
    assert cfg.camera_count == 6 and cfg.identity_signal == 0.3 and cfg.seed == 0
    assert len(cfg.topology) == 12
