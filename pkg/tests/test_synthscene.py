import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rcmtrack.core import CLASS_PROFILES, ObjectClass
from rcmtrack.io_formats import FormatError, load_bundle, read_mot_file, records_to_trajectories
from rcmtrack.synthscene import (
    SPEED_JITTER,
    EventSpec,
    NoiseSpec,
    ScenarioConfig,
    base_confidence,
    bench_suite,
    build_sequence,
    default_calibration,
    expected_point_count,
    generate_scenario,
    project_target_boxes,
    read_scenario_config,
    simulate_camera_detections,
    simulate_radar,
    unproject_box,
)

QUIET = NoiseSpec(jitter=0.0, occlusion_jitter=0.0, conf_sigma=0.0, dropout=0.0, clutter=0.0, radar_clutter=0.0)


def radar_equal(a: dict, b: dict) -> bool:
    return a.keys() == b.keys() and all(np.array_equal(a[f], b[f]) for f in a)


def pinned(s, position, velocity=(0.0, 0.0)):
    """The scenario with its first object held at a fixed world position."""
    o = s.objects[0]
    T = len(o.range)
    pos = np.tile(np.asarray(position, float), (T, 1))
    o2 = dataclasses.replace(
        o,
        position=pos,
        velocity=np.tile(np.asarray(velocity, float), (T, 1)),
        range=np.hypot(pos[:, 0], pos[:, 1]),
    )
    return dataclasses.replace(s, objects=[o2])


# --- generation ---------------------------------------------------------------------


def test_generation_is_deterministic():
    cfg = ScenarioConfig(n_objects=5, duration=150, seed=99, events=(EventSpec("droplet_dropout", "ego", 10, 40, 0.7),))
    s1, d1, r1 = build_sequence(cfg)
    s2, d2, r2 = build_sequence(cfg)
    assert list(s1.gt.rows()) == list(s2.gt.rows())
    assert d1 == d2
    assert radar_equal(r1, r2)


def test_export_is_byte_identical(tmp_path):
    cfg = ScenarioConfig(n_objects=3, duration=60, seed=5)
    a, b = tmp_path / "a" / "seq", tmp_path / "b" / "seq"
    build_sequence(cfg, a)
    build_sequence(cfg, b)
    for name in ("gt.txt", "det.txt", "radar.csv", "calib.json", "seqinfo.ini"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_different_seeds_differ():
    a = generate_scenario(ScenarioConfig(n_objects=3, duration=30, seed=1))
    b = generate_scenario(ScenarioConfig(n_objects=3, duration=30, seed=2))
    assert list(a.gt.rows()) != list(b.gt.rows())


def test_zero_objects_is_valid():
    s, dets, radar = build_sequence(ScenarioConfig(n_objects=0, duration=20, noise=QUIET))
    assert s.gt.total == 0 and dets == {} and radar == {}


def test_straight_approach_projects_monotonically():
    cfg = ScenarioConfig()
    calib = default_calibration()
    T = 100
    t = np.arange(T)
    pos = np.column_stack((150.0 - 1.0 * t, 30.0 - 0.4 * t))
    heading = np.full(T, math.atan2(-0.4, -1.0))
    boxes = project_target_boxes(pos, heading, 20.0, 5.0, 6.0, np.zeros(T), cfg, calib)
    u = boxes[:, 0] + boxes[:, 2] / 2
    r = np.hypot(pos[:, 0], pos[:, 1])
    assert np.all(np.diff(r) < 0)
    d = np.diff(u)
    assert np.all(d > 0) or np.all(d < 0)


def test_ship_speeds_follow_profile_over_100_seeds():
    lo, hi = 0.97 * (1 - SPEED_JITTER), 0.97 * (1 + SPEED_JITTER)
    means = []
    for seed in range(100):
        s = generate_scenario(ScenarioConfig(n_objects=3, class_mix=(1.0, 0.0, 0.0), duration=2, seed=seed))
        assert all(o.class_id == ObjectClass.SHIP for o in s.objects)
        speeds = [o.speed for o in s.objects]
        assert all(lo <= v <= hi for v in speeds)
        means.append(np.mean(speeds))
    assert lo <= np.mean(means) <= hi
    assert np.mean(means) == pytest.approx(0.97, rel=0.05)


@settings(max_examples=15)
@given(st.integers(0, 2**32), st.integers(1, 6))
def test_gt_boxes_unproject_to_world_position(seed, n):
    cfg = ScenarioConfig(n_objects=n, duration=60, seed=seed, events=(EventSpec("sway", "ego", 5, 50, 1.0),))
    s = generate_scenario(cfg)
    by_id = {o.id: o for o in s.objects}
    for f, i, _, x, y, w, h in s.gt.rows():
        world = unproject_box((x, y, w, h), s.calib, cfg, float(s.camera_yaw[f - 1]))
        assert np.linalg.norm(world - by_id[i].position[f - 1]) < 1.0


def test_config_validation():
    with pytest.raises(ValueError):
        ScenarioConfig(class_mix=(0.5, 0.5, 0.5))
    with pytest.raises(ValueError):
        ScenarioConfig(duration=0)
    with pytest.raises(ValueError):
        ScenarioConfig(n_objects=2, events=(EventSpec("occlusion", 3, 1, 5, 0.5),))
    with pytest.raises(ValueError):
        EventSpec("occlusion", 1, 5, 5, 0.5)
    with pytest.raises(ValueError):
        EventSpec("fog", 1, 1, 5, 0.5)
    with pytest.raises(ValueError):
        EventSpec("sway", 1, 1, 5, 0.5)


# --- camera -------------------------------------------------------------------------


def test_noiseless_detections_equal_gt_boxes():
    s = generate_scenario(ScenarioConfig(n_objects=1, duration=200, seed=3, noise=QUIET))
    dets = simulate_camera_detections(s)
    o = s.objects[0]
    gt = {f: b for f, _, _, *b in s.gt.rows()}
    assert set(dets) == set(gt)
    for f, ds in dets.items():
        assert len(ds) == 1
        assert ds[0].bbox.as_tlwh() == pytest.approx(gt[f], abs=1e-6)
        assert ds[0].confidence == pytest.approx(float(base_confidence(o.range[f - 1])), abs=1e-6)
        if o.range[f - 1] <= 130.0:
            assert ds[0].confidence >= 0.5


def test_occlusion_halves_confidence():
    ev = EventSpec("occlusion", 1, 20, 60, 0.5)
    cfg = ScenarioConfig(n_objects=1, duration=100, seed=3, noise=QUIET, events=(ev,))
    s = generate_scenario(cfg)
    dets = simulate_camera_detections(s)
    for f, ds in dets.items():
        base = float(base_confidence(s.objects[0].range[f - 1]))
        want = base * 0.5 if ev.active(f) else base
        assert ds[0].confidence == pytest.approx(want, abs=1e-6)


def test_full_dropout_removes_target():
    ev = EventSpec("droplet_dropout", 1, 20, 60, 1.0)
    s = generate_scenario(ScenarioConfig(n_objects=1, duration=100, seed=3, noise=QUIET, events=(ev,)))
    dets = simulate_camera_detections(s)
    visible = {f for f, *_ in s.gt.rows()}
    for f in range(1, 101):
        assert (f in dets) == (f in visible and not ev.active(f))


# --- radar --------------------------------------------------------------------------


def test_expected_point_counts():
    assert expected_point_count(ObjectClass.BOAT, 50.0) == pytest.approx(30.02)
    assert expected_point_count(ObjectClass.SHIP, 100.0) == pytest.approx(35.40)
    assert expected_point_count(ObjectClass.VESSEL, 1.0) == pytest.approx(4 * 75.56)
    assert expected_point_count(ObjectClass.BOAT, 10_000.0) == 1.0


def _boat_scene(duration=400):
    mix = (0.0, 1.0, 0.0)
    return generate_scenario(ScenarioConfig(n_objects=1, class_mix=mix, duration=duration, seed=11, noise=QUIET))


def test_boat_at_50m_mean_point_count():
    s = pinned(_boat_scene(), (50.0, 0.0))
    radar = simulate_radar(s)
    counts = [len(radar.get(f, ())) for f in range(1, 401)]
    assert np.mean(counts) == pytest.approx(CLASS_PROFILES[ObjectClass.BOAT].mean_point_count, rel=0.05)


def test_object_beyond_max_range_returns_nothing():
    assert simulate_radar(pinned(_boat_scene(50), (250.0, 0.0))) == {}


def test_stationary_object_doppler_within_half_step():
    radar = simulate_radar(pinned(_boat_scene(100), (60.0, 5.0)))
    dop = np.concatenate([r[:, 3] for r in radar.values()])
    assert len(dop) > 100
    assert np.all(np.abs(dop) <= 0.27 / 2 + 1e-6)


def test_radar_ranges_quantized_and_within_fov():
    s, _, radar = build_sequence(ScenarioConfig(n_objects=6, duration=80, seed=4))
    pts = np.concatenate(list(radar.values()))
    steps = pts[:, 0] / 0.43
    assert np.allclose(steps, np.round(steps), atol=1e-4)
    assert np.all(pts[:, 0] <= 200.0)
    assert np.all(np.abs(pts[:, 1]) <= math.radians(55.0) + 1e-9)


def test_droplets_hit_camera_but_not_radar():
    ev = (EventSpec("droplet_dropout", 1, 30, 150, 0.8),)
    cam_clear = cam_wet = 0
    radar_clear, radar_wet = [], []
    for seed in range(50):
        base = ScenarioConfig(n_objects=3, duration=160, seed=seed)
        wet = dataclasses.replace(base, events=ev)
        s0, d0, r0 = build_sequence(base)
        s1, d1, r1 = build_sequence(wet)
        cam_clear += sum(len(d0.get(f, ())) for f in range(30, 151))
        cam_wet += sum(len(d1.get(f, ())) for f in range(30, 151))
        radar_clear.append(sum(len(r0.get(f, ())) for f in range(30, 151)))
        radar_wet.append(sum(len(r1.get(f, ())) for f in range(30, 151)))
    assert cam_wet < cam_clear
    assert np.mean(radar_wet) == pytest.approx(np.mean(radar_clear), rel=0.10)


# --- export and suite ---------------------------------------------------------------


def test_export_round_trip(tmp_path):
    cfg = ScenarioConfig(n_objects=3, duration=40, seed=8)
    s, dets, radar = build_sequence(cfg, tmp_path)
    b = load_bundle(tmp_path, need_gt=True)
    assert list(b.gt.rows()) == list(s.gt.rows())
    assert b.detections == dets
    assert radar_equal(b.radar, radar)
    np.testing.assert_array_equal(b.calib.T_radar_to_cam, s.calib.T_radar_to_cam)
    assert b.info.length == 40


def test_empty_export_has_valid_files(tmp_path):
    build_sequence(ScenarioConfig(n_objects=0, duration=5, noise=QUIET), tmp_path)
    b = load_bundle(tmp_path, need_gt=True)
    assert b.gt.total == 0 and b.detections == {} and b.radar == {}
    assert (tmp_path / "radar.csv").read_text().startswith("frame,")


def test_two_objects_ten_frames_gt_bound(tmp_path):
    build_sequence(ScenarioConfig(n_objects=2, duration=10, seed=2), tmp_path)
    assert len(read_mot_file(tmp_path / "gt.txt")) <= 20
    assert records_to_trajectories(read_mot_file(tmp_path / "gt.txt")).total <= 20


def test_bench_suite_shape():
    suite = bench_suite()
    assert [n for n, _ in suite] == [f"usv-bench-{k:02d}" for k in range(1, 21)]
    assert len({c.seed for _, c in suite}) == 20
    for _, c in suite:
        assert c.duration == 600 and 4 <= c.n_objects <= 8
        kinds = [e.kind for e in c.events]
        assert "occlusion" in kinds and "droplet_dropout" in kinds


def test_scenario_config_file(tmp_path):
    p = tmp_path / "scene.ini"
    p.write_text(
        "[scenario]\nn_objects = 2\nduration = 50\nseed = 17\nclass_mix = 0.5, 0.5, 0.0\n"
        "[noise]\nclutter = 0.0\n"
        "[event.1]\nkind = occlusion\ntarget = 1\nstart = 5\nend = 20\nintensity = 0.5\n"
    )
    cfg = read_scenario_config(p)
    assert (cfg.n_objects, cfg.duration, cfg.seed, cfg.class_mix) == (2, 50, 17, (0.5, 0.5, 0.0))
    assert cfg.noise.clutter == 0.0
    assert cfg.events == (EventSpec("occlusion", 1, 5, 20, 0.5),)


@pytest.mark.parametrize(
    "text",
    [
        "[scenario]\nbogus = 1\n",
        "[scenario]\nduration = ten\n",
        "[weather]\nrain = 1\n",
        "[event.1]\nkind = occlusion\ntarget = 1\nstart = 5\n",
        "[scenario]\nduration = 10\n[event.1]\nkind = occlusion\ntarget = 1\nstart = 5\nend = 20\nintensity = 0.5\n",
    ],
)
def test_scenario_config_errors(tmp_path, text):
    p = tmp_path / "bad.ini"
    p.write_text(text)
    with pytest.raises(FormatError):
        read_scenario_config(p)
