import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gkftrack.geometry import Box3D, wrap_angle
from gkftrack.motion import MotionModel
from gkftrack.scenario import AnnotationBox
from gkftrack.simulator import PRESETS, ConfigError, NoiseSpec, SimConfig, generate_scenario, perturb_detection

NOISELESS = NoiseSpec(position_scale=0, size_scale=0, heading_scale=0, velocity_scale=0)
GT = AnnotationBox(Box3D((1.0, 2.0, 0.8), (1.8, 4.5, 1.6), 0.3), 7, 0, 0, (3.0, 1.0))


def test_noiseless_detections_equal_ground_truth():
    sc = generate_scenario(SimConfig(n_objects=5, n_frames=10, noise=NOISELESS), 3)
    for f in sc.frames:
        assert len(f.detections) == len(f.gt)
        for d, g in zip(f.detections, f.gt):
            np.testing.assert_array_equal(d.box.to_vector(), g.box.to_vector())
            assert d.score == 1.0


def test_same_seed_same_scenario():
    cfg = SimConfig(n_objects=4, n_frames=12, noise=NoiseSpec(mode="mixture", drop_prob=0.1, fp_rate=0.5),
                    annotation_coverage=0.5, random_lifetimes=True)
    a, b = generate_scenario(cfg, 11), generate_scenario(cfg, 11)
    assert a.annotation_mask == b.annotation_mask
    for fa, fb in zip(a.frames, b.frames):
        assert fa.timestamp == fb.timestamp
        assert fa.detections == fb.detections and fa.gt == fb.gt
    c = generate_scenario(cfg, 12)
    assert any(fa.detections != fc.detections for fa, fc in zip(a.frames, c.frames))


def test_drop_rate_near_configured():
    cfg = SimConfig(n_objects=10, n_frames=100, noise=NoiseSpec(drop_prob=0.3))
    sc = generate_scenario(cfg, 0)
    n_gt = sum(len(f.gt) for f in sc.frames)
    n_det = sum(len(f.detections) for f in sc.frames)
    assert n_gt == 1000
    assert 0.27 <= 1 - n_det / n_gt <= 0.33


def test_all_zero_scales_give_exact_box_and_top_score():
    d = perturb_detection(GT, NOISELESS, np.random.default_rng(0))
    assert d.box == GT.box and d.velocity == GT.velocity and d.score == 1.0


def test_gaussian_position_variance():
    rng = np.random.default_rng(1)
    spec = NoiseSpec(position_scale=0.3)
    xs = np.array([perturb_detection(GT, spec, rng).box.center[0] for _ in range(10_000)])
    assert xs.var(ddof=1) == pytest.approx(0.09, rel=0.05)


def test_mixture_noise_is_heavy_tailed():
    rng = np.random.default_rng(2)
    spec = NoiseSpec(mode="mixture", position_scale=0.3, outlier_prob=0.1, outlier_scale=10.0)
    xs = np.array([perturb_detection(GT, spec, rng).box.center[0] for _ in range(10_000)]) - GT.box.center[0]
    excess = np.mean(xs ** 4) / np.mean(xs ** 2) ** 2 - 3.0
    assert excess > 0.0


def test_student_t_noise_is_heavy_tailed_with_unit_scale():
    rng = np.random.default_rng(3)
    spec = NoiseSpec(mode="student_t", position_scale=0.3, dof=5.0)
    xs = np.array([perturb_detection(GT, spec, rng).box.center[0] for _ in range(20_000)]) - GT.box.center[0]
    assert xs.var() == pytest.approx(0.09, rel=0.1)
    assert np.mean(xs ** 4) / np.mean(xs ** 2) ** 2 - 3.0 > 0.0


def test_score_falls_with_noise_size():
    rng = np.random.default_rng(4)
    spec = NoiseSpec(score_jitter=0.0)
    dets = [perturb_detection(GT, spec, rng) for _ in range(2000)]
    err = [np.linalg.norm(d.box.to_vector()[:3] - GT.box.to_vector()[:3]) for d in dets]
    assert np.corrcoef(err, [d.score for d in dets])[0, 1] < -0.3
    assert all(spec.score_floor <= d.score <= 1.0 for d in dets)


def test_heading_stays_wrapped():
    rng = np.random.default_rng(5)
    gt = AnnotationBox(Box3D((0, 0, 0), (1, 1, 1), math.pi - 0.01), 0)
    for _ in range(200):
        assert -math.pi <= perturb_detection(gt, NoiseSpec(heading_scale=0.5), rng).box.yaw < math.pi


@pytest.mark.parametrize("preset", PRESETS)
def test_ground_truth_is_physically_consistent(preset):
    cfg = SimConfig(preset=preset, n_objects=6, n_frames=15, random_lifetimes=preset == "random")
    sc = generate_scenario(cfg, 7)
    for iid, (kind, states) in sc.truth_states.items():
        model = MotionModel(kind, beta=cfg.beta)
        ks = sorted(states)
        assert ks == list(range(ks[0], ks[-1] + 1))
        for a, b in zip(ks, ks[1:]):
            nxt = model.f(states[a], cfg.period)
            d = nxt - states[b]
            d[model.heading_index] = wrap_angle(d[model.heading_index])
            assert np.abs(d).max() <= 1e-9
        for k in ks:
            (g,) = [g for g in sc.frames[k].gt if g.instance_id == iid]
            np.testing.assert_allclose(g.box.to_vector(), model.h(states[k]), atol=1e-12)


def test_annotation_coverage_fraction():
    sc = generate_scenario(SimConfig(n_objects=10, n_frames=100, annotation_coverage=0.5), 8)
    n = len(sc.annotation_mask)
    assert n == 1000
    # 99.9% binomial band
    assert abs(sc.coverage() - 0.5) <= 3.3 * math.sqrt(0.25 / n)
    visible = sum(len(sc.visible_annotations(k)) for k in range(100))
    assert visible == sum(sc.annotation_mask.values())


def test_false_positives_have_no_identity():
    cfg = SimConfig(n_objects=3, n_frames=20, noise=NoiseSpec(fp_rate=2.0))
    sc = generate_scenario(cfg, 9)
    ids = set(sc.truth_states)
    n_fp = 0
    for k, f in enumerate(sc.frames):
        n_fp += len(f.detections) - len(f.gt)
        assert {g.instance_id for g in f.gt} <= ids
        assert {a.instance_id for a in sc.visible_annotations(k)} <= ids
    assert n_fp > 20
    assert not hasattr(sc.frames[0].detections[0], "instance_id")


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 8), st.integers(0, 10), st.integers(0, 1000))
def test_shapes_follow_config(n_objects, n_frames, seed):
    sc = generate_scenario(SimConfig(n_objects=n_objects, n_frames=n_frames), seed)
    assert len(sc.frames) == n_frames
    assert all(len(f.gt) == n_objects for f in sc.frames)
    ts = [f.timestamp for f in sc.frames]
    assert ts == sorted(ts)


@pytest.mark.parametrize("kw, field", [
    ({"n_objects": -1}, "n_objects"),
    ({"annotation_coverage": 1.5}, "annotation_coverage"),
    ({"preset": "highway"}, "preset"),
    ({"noise": NoiseSpec(mode="laplace")}, "noise.mode"),
    ({"noise": NoiseSpec(drop_prob=2.0)}, "noise.drop_prob"),
])
def test_invalid_config_names_field(kw, field):
    with pytest.raises(ConfigError) as e:
        generate_scenario(SimConfig(**kw), 0)
    assert e.value.field == field
