import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mocapdyn.errors import InputError, ParseError
from mocapdyn.skeleton import center_of_mass
from mocapdyn.trial_io import (Activity, ContactPhase, Frame, SubjectMeta,
                               Trial, average_trial_speed, classify_contact,
                               contact_phases, load_trial, save_trial,
                               segment_trial, stance_intervals, subject_split,
                               trial_from_arrays, trials_equal)


def make_trial(T=20, nm=3, nc=2, seed=0, subject="S01", treadmill=False,
               occlude=(), unobserved=()):
    rng = np.random.default_rng(seed)
    markers = rng.standard_normal((T, nm, 3))
    for t, k in occlude:
        markers[t, k] = np.nan
    wrenches = rng.standard_normal((T, nc, 6)) * 100.0
    observed = np.ones(T, dtype=bool)
    for t in unobserved:
        observed[t] = False
        wrenches[t] = 0.0
    return trial_from_arrays(subject, "biped12", 0.01, markers, wrenches,
                             SubjectMeta(70.0, 1.75, age=33, sex="f"),
                             observed=observed, activity=Activity.walking,
                             treadmill=treadmill)


# ---------------------------------------------------------------------------
# data model

def test_arrays_round_trip():
    trial = make_trial(occlude=[(2, 1), (5, 0)])
    arr = trial.marker_array()
    assert arr.shape == (20, 3, 3)
    assert np.all(np.isnan(arr[2, 1])) and np.all(np.isnan(arr[5, 0]))
    assert np.isfinite(arr[2, 0]).all()
    assert trial.wrench_array().shape == (20, 2, 6)


def test_unobserved_frames_one_based():
    trial = make_trial(unobserved=[0, 7])
    assert list(trial.unobserved_frames()) == [1, 8]
    assert trial.observed_mask().sum() == 18


def test_nonfinite_observed_wrench_rejected():
    with pytest.raises(InputError):
        Frame([None], np.full((1, 6), np.nan), force_observed=True)
    # fine when the frame is marked unobserved
    Frame([None], np.full((1, 6), np.nan), force_observed=False)


def test_frame_count_mismatch_rejected():
    trial = make_trial()
    bad = trial.frames[:-1] + [Frame([None] * 5, np.zeros((2, 6)))]
    with pytest.raises(InputError):
        Trial("S01", "biped12", 0.01, bad, trial.meta)


# ---------------------------------------------------------------------------
# file format

def test_round_trip_bit_exact(tmp_path):
    trial = make_trial(T=40, occlude=[(3, 2)], unobserved=[10, 11])
    path = tmp_path / "a.trial"
    save_trial(trial, path)
    back = load_trial(path)
    assert trials_equal(trial, back)
    # a second save is byte-identical
    path2 = tmp_path / "b.trial"
    save_trial(back, path2)
    assert path.read_bytes() == path2.read_bytes()


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 15), st.integers(1, 4), st.integers(0, 10_000))
def test_round_trip_property(tmp_path_factory, T, nm, seed):
    rng = np.random.default_rng(seed)
    markers = rng.standard_normal((T, nm, 3)) * 10.0 ** rng.integers(-3, 4)
    mask = rng.random((T, nm)) < 0.2
    markers[mask] = np.nan
    wrenches = rng.standard_normal((T, 2, 6)) * 500
    trial = trial_from_arrays("Sx", "m", 1 / 128, markers, wrenches,
                              SubjectMeta(55.5, 1.6))
    path = tmp_path_factory.mktemp("rt") / "t.trial"
    save_trial(trial, path)
    assert trials_equal(trial, load_trial(path))


def test_parse_errors_carry_line_numbers(tmp_path):
    trial = make_trial(T=15)
    path = tmp_path / "t.trial"
    save_trial(trial, path)
    text = path.read_text().splitlines()

    # corrupt a data cell
    n_header = next(i for i, l in enumerate(text) if l == "data") + 2
    row = text[n_header + 4].split(",")
    row[2] = "oops"
    bad = text[:]
    bad[n_header + 4] = ",".join(row)
    path.write_text("\n".join(bad) + "\n")
    with pytest.raises(ParseError) as exc:
        load_trial(path)
    assert exc.value.line == n_header + 5  # 1-based

    # wrong magic
    bad = ["nope"] + text[1:]
    path.write_text("\n".join(bad) + "\n")
    with pytest.raises(ParseError) as exc:
        load_trial(path)
    assert exc.value.line == 1

    # marker list inconsistent with columns
    bad = [l.replace("markers m0,m1,m2", "markers m0,m1") for l in text]
    path.write_text("\n".join(bad) + "\n")
    with pytest.raises(ParseError):
        load_trial(path)


def test_missing_header_key(tmp_path):
    trial = make_trial(T=15)
    path = tmp_path / "t.trial"
    save_trial(trial, path)
    text = [l for l in path.read_text().splitlines() if not l.startswith("dt ")]
    path.write_text("\n".join(text) + "\n")
    with pytest.raises(ParseError):
        load_trial(path)


# ---------------------------------------------------------------------------
# segmentation

def test_segment_2005_drops_remainder():
    trial = make_trial(T=2005)
    segments, report = segment_trial(trial, max_len=2000)
    assert [s.length for s in segments] == [2000]
    assert report.dropped_frames == 5
    assert report.notes


def test_segment_exact_multiple_no_drop():
    segments, report = segment_trial(make_trial(T=4000), max_len=2000)
    assert [s.length for s in segments] == [2000, 2000]
    assert report.dropped_frames == 0


def test_segment_keeps_long_remainder():
    segments, report = segment_trial(make_trial(T=2012), max_len=2000)
    assert [s.length for s in segments] == [2000, 12]
    assert report.dropped_frames == 0


def test_segment_preserves_frame_content():
    trial = make_trial(T=2030, occlude=[(2005, 1)])
    segments, _ = segment_trial(trial, max_len=2000)
    assert segments[1].frames[5].marker_observations[1] is None
    assert np.array_equal(segments[1].frames[0].wrenches,
                          trial.frames[2000].wrenches)


# ---------------------------------------------------------------------------
# contact classification

def wrench_frame(fy_left, fy_right):
    w = np.zeros((2, 6))
    w[0, 4] = fy_left
    w[1, 4] = fy_right
    return Frame([None], w)


def test_classify_contact_phases():
    bw = 70.0 * 9.81  # threshold = max(10, 0.02 * 686.7) = 13.734 N
    assert classify_contact(wrench_frame(300, 400), bw) is ContactPhase.double
    assert classify_contact(wrench_frame(300, 5), bw) is ContactPhase.single_left
    assert classify_contact(wrench_frame(5, 300), bw) is ContactPhase.single_right
    assert classify_contact(wrench_frame(5, 5), bw) is ContactPhase.flight
    # 13 N is below the body-weight fraction but above the 10 N floor
    assert classify_contact(wrench_frame(13, 0), bw) is ContactPhase.flight
    # light subject: the 10 N noise floor dominates
    assert classify_contact(wrench_frame(13, 0), 400.0) is ContactPhase.single_left


def test_stance_intervals_min_length():
    p = ([ContactPhase.flight] * 3 + [ContactPhase.single_left] * 4
         + [ContactPhase.flight] * 2 + [ContactPhase.double] * 6)
    assert stance_intervals(p, "left") == [(9, 15)]  # the 4-frame one is dropped
    assert stance_intervals(p, "right") == [(9, 15)]
    assert stance_intervals(p, "left", min_len=4) == [(3, 7), (9, 15)]


# ---------------------------------------------------------------------------
# average speed

def test_overground_speed_from_com(freebox):
    T = 60
    poses = np.zeros((T, 6))
    poses[:, 3] = 1.3 * np.arange(T) * 0.01  # root x at 1.3 m/s
    trial = make_trial(T=T)
    speed = average_trial_speed(freebox, trial, poses)
    assert abs(speed - 1.3) < 1e-6
    # sanity: CoM really moves with the root translation
    com = center_of_mass(freebox, poses)
    assert np.allclose(np.diff(com[:, 0]), 0.013)


def test_treadmill_speed_from_stance_displacement(biped):
    T = 120
    dt = 0.01
    poses = np.zeros((T, biped.dof_count))
    poses[:, 3] = -0.9 * np.arange(T) * dt  # belt carries the body at 0.9 m/s
    wrenches = np.zeros((T, 2, 6))
    for t in range(T):
        wrenches[t, (t // 20) % 2, 4] = 600.0  # alternate feet every 20 frames
    trial = trial_from_arrays("S01", "biped12", dt,
                              np.zeros((T, 1, 3)), wrenches,
                              SubjectMeta(67.4, 1.75), treadmill=True)
    speed = average_trial_speed(biped, trial, poses)
    assert abs(speed - 0.9) < 1e-9


def test_treadmill_without_stance_raises(biped):
    T = 30
    trial = trial_from_arrays("S01", "biped12", 0.01, np.zeros((T, 1, 3)),
                              np.zeros((T, 2, 6)), SubjectMeta(67.4, 1.75),
                              treadmill=True)
    with pytest.raises(InputError):
        average_trial_speed(biped, trial, np.zeros((T, biped.dof_count)))


def test_speed_pose_length_mismatch(freebox):
    with pytest.raises(InputError):
        average_trial_speed(freebox, make_trial(T=20), np.zeros((19, 6)))


# ---------------------------------------------------------------------------
# subject split

def test_subject_split_partitions_by_subject():
    trials = [make_trial(subject=f"S{i:02d}", seed=i) for i in range(20)
              for _ in range(3)]
    split, assignment = subject_split(trials, seed=42)
    assert len(split["train"]) + len(split["dev"]) + len(split["test"]) == 60
    for name in ("train", "dev", "test"):
        subs = {t.subject_id for t in split[name]}
        assert all(assignment[s] == name for s in subs)
        assert len(split[name]) >= 1
    # no subject straddles splits
    seen = {}
    for name in ("train", "dev", "test"):
        for t in split[name]:
            assert seen.setdefault(t.subject_id, name) == name
    # 90:5:5 over 20 subjects -> 18/1/1
    counts = {k: len({t.subject_id for t in v}) for k, v in split.items()}
    assert counts == {"train": 18, "dev": 1, "test": 1}


def test_subject_split_deterministic_and_seed_sensitive():
    trials = [make_trial(subject=f"S{i}", seed=i) for i in range(12)]
    _, a1 = subject_split(trials, seed=7)
    _, a2 = subject_split(trials, seed=7)
    assert a1 == a2
    diffs = [subject_split(trials, seed=s)[1] for s in range(10)]
    assert any(d != a1 for d in diffs)


def test_subject_split_needs_three_subjects():
    with pytest.raises(InputError):
        subject_split([make_trial(subject="A"), make_trial(subject="B")])
