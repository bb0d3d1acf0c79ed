"""Motion trial data model, canonical file format, and post-processing rules.

The canonical ``.trial`` format is UTF-8 text: a key/value header (subject
meta, dt, marker names, contact body names) followed by one CSV row per
frame.  Floats are written with ``repr`` so a save/load round trip is
bit-exact.  See ``docs/trial-format.md`` for the full schema.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, field

import numpy as np

from . import skeleton as sk
from .errors import InputError, ParseError
from .signals import TimeSeries, butterworth_lowpass, central_difference1

FORMAT_HEADER = "trial v1"


class Activity(enum.Enum):
    walking = "walking"
    running = "running"
    stairs = "stairs"
    sit_to_stand = "sit_to_stand"
    jumping = "jumping"
    squatting = "squatting"
    standing = "standing"
    transition = "transition"
    other = "other"


class ContactPhase(enum.Enum):
    double = "double"
    single_left = "single_left"
    single_right = "single_right"
    flight = "flight"


@dataclass
class SubjectMeta:
    mass: float
    height: float
    age: int | None = None
    sex: str | None = None

    def __post_init__(self):
        if not (self.mass > 0 and self.height > 0):
            raise InputError("subject mass and height must be > 0")

    @property
    def weight_newtons(self) -> float:
        return self.mass * 9.81


@dataclass
class Frame:
    """One time step: marker observations (None = occluded), one 6-vector
    wrench (moment; force) per contact body, and observation flags."""

    marker_observations: list
    wrenches: np.ndarray
    force_observed: bool = True
    grf_valid: bool = True

    def __post_init__(self):
        self.wrenches = np.asarray(self.wrenches, dtype=float).reshape(-1, 6)
        self.marker_observations = [
            None if m is None else np.asarray(m, dtype=float).reshape(3)
            for m in self.marker_observations]
        if self.force_observed and not np.all(np.isfinite(self.wrenches)):
            raise InputError("wrench must be finite when force_observed")


@dataclass
class Trial:
    subject_id: str
    skeleton_name: str
    dt: float
    frames: list
    meta: SubjectMeta
    marker_names: list = field(default_factory=list)
    contact_names: list = field(default_factory=list)
    activity: Activity = Activity.other
    treadmill: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise InputError("dt must be > 0")
        if self.frames:
            nm = len(self.frames[0].marker_observations)
            nc = self.frames[0].wrenches.shape[0]
            for i, f in enumerate(self.frames):
                if len(f.marker_observations) != nm:
                    raise InputError(f"frame {i}: marker count mismatch")
                if f.wrenches.shape[0] != nc:
                    raise InputError(f"frame {i}: contact body count mismatch")

    @property
    def length(self) -> int:
        return len(self.frames)

    @property
    def n_contacts(self) -> int:
        return self.frames[0].wrenches.shape[0] if self.frames else 0

    def marker_array(self) -> np.ndarray:
        """(T, M, 3) marker observations, NaN where occluded."""
        nm = len(self.frames[0].marker_observations)
        out = np.full((self.length, nm, 3), np.nan)
        for t, f in enumerate(self.frames):
            for k, m in enumerate(f.marker_observations):
                if m is not None:
                    out[t, k] = m
        return out

    def wrench_array(self) -> np.ndarray:
        return np.stack([f.wrenches for f in self.frames])

    def observed_mask(self) -> np.ndarray:
        return np.array([f.force_observed for f in self.frames], dtype=bool)

    def unobserved_frames(self) -> np.ndarray:
        """Sorted 1-based indices of frames with unobserved external forces."""
        return np.nonzero(~self.observed_mask())[0] + 1


def trial_from_arrays(subject_id, skeleton_name, dt, markers, wrenches, meta,
                      observed=None, grf_valid=None, marker_names=None,
                      contact_names=None, activity=Activity.other,
                      treadmill=False) -> Trial:
    """Build a Trial from (T, M, 3) markers (NaN = occluded) and (T, C, 6)
    wrenches."""
    markers = np.asarray(markers, dtype=float)
    wrenches = np.asarray(wrenches, dtype=float)
    T = markers.shape[0]
    if observed is None:
        observed = np.ones(T, dtype=bool)
    if grf_valid is None:
        grf_valid = np.ones(T, dtype=bool)
    frames = []
    for t in range(T):
        obs = [None if np.any(np.isnan(markers[t, k])) else markers[t, k]
               for k in range(markers.shape[1])]
        frames.append(Frame(obs, wrenches[t], bool(observed[t]),
                            bool(grf_valid[t])))
    if marker_names is None:
        marker_names = [f"m{k}" for k in range(markers.shape[1])]
    if contact_names is None:
        contact_names = [f"c{k}" for k in range(wrenches.shape[1])]
    return Trial(subject_id, skeleton_name, dt, frames, meta, marker_names,
                 contact_names, activity, treadmill)


# ---------------------------------------------------------------------------
# file format

def save_trial(trial: Trial, path) -> None:
    buf = io.StringIO()
    buf.write(FORMAT_HEADER + "\n")
    buf.write(f"subject {trial.subject_id}\n")
    buf.write(f"skeleton {trial.skeleton_name}\n")
    buf.write(f"dt {repr(trial.dt)}\n")
    buf.write(f"activity {trial.activity.value}\n")
    buf.write(f"treadmill {int(trial.treadmill)}\n")
    buf.write(f"mass {repr(trial.meta.mass)}\n")
    buf.write(f"height {repr(trial.meta.height)}\n")
    if trial.meta.age is not None:
        buf.write(f"age {trial.meta.age}\n")
    if trial.meta.sex is not None:
        buf.write(f"sex {trial.meta.sex}\n")
    buf.write("markers " + ",".join(trial.marker_names) + "\n")
    buf.write("contacts " + ",".join(trial.contact_names) + "\n")
    buf.write("data\n")
    writer = csv.writer(buf, lineterminator="\n")
    header = ["time"]
    for name in trial.marker_names:
        header += [f"{name}_{ax}" for ax in "xyz"]
    for name in trial.contact_names:
        header += [f"{name}_{c}" for c in ("mx", "my", "mz", "fx", "fy", "fz")]
    header += ["force_observed", "grf_valid"]
    writer.writerow(header)
    for t, f in enumerate(trial.frames):
        row = [repr(t * trial.dt)]
        for m in f.marker_observations:
            row += ["", "", ""] if m is None else [repr(float(v)) for v in m]
        for w in f.wrenches:
            row += [repr(float(v)) for v in w]
        row += [int(f.force_observed), int(f.grf_valid)]
        writer.writerow(row)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def load_trial(path) -> Trial:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != FORMAT_HEADER:
        raise ParseError(f"expected header {FORMAT_HEADER!r}", line=1)

    header = {}
    data_start = None
    for ln, line in enumerate(lines[1:], start=2):
        if line.strip() == "data":
            data_start = ln
            break
        if not line.strip():
            continue
        key, _, value = line.partition(" ")
        header[key] = value
    if data_start is None:
        raise ParseError("missing 'data' section")

    for key in ("subject", "skeleton", "dt", "markers", "contacts",
                "mass", "height"):
        if key not in header:
            raise ParseError(f"missing header key {key!r}")
    try:
        dt = float(header["dt"])
        meta = SubjectMeta(float(header["mass"]), float(header["height"]),
                           int(header["age"]) if "age" in header else None,
                           header.get("sex"))
        activity = Activity(header.get("activity", "other"))
        treadmill = bool(int(header.get("treadmill", "0")))
    except (ValueError, KeyError) as exc:
        raise ParseError(f"bad header value: {exc}") from exc
    marker_names = header["markers"].split(",") if header["markers"] else []
    contact_names = header["contacts"].split(",") if header["contacts"] else []
    nm, nc = len(marker_names), len(contact_names)
    n_cols = 1 + 3 * nm + 6 * nc + 2

    reader = csv.reader(lines[data_start:])
    rows = list(reader)
    if not rows:
        raise ParseError("missing CSV column header", line=data_start + 1)
    if len(rows[0]) != n_cols:
        raise ParseError(
            f"column header has {len(rows[0])} columns, expected {n_cols} "
            "(marker/contact count mismatch)", line=data_start + 1)

    frames = []
    for i, row in enumerate(rows[1:]):
        ln = data_start + 2 + i
        if len(row) != n_cols:
            raise ParseError(f"row has {len(row)} columns, expected {n_cols}",
                             line=ln)
        try:
            obs = []
            for k in range(nm):
                cell = row[1 + 3 * k:1 + 3 * k + 3]
                if any(c == "" for c in cell):
                    obs.append(None)
                else:
                    obs.append([float(c) for c in cell])
            base = 1 + 3 * nm
            wr = np.array([[float(row[base + 6 * c + j]) for j in range(6)]
                           for c in range(nc)])
            force_observed = bool(int(row[base + 6 * nc]))
            grf_valid = bool(int(row[base + 6 * nc + 1]))
            frames.append(Frame(obs, wr, force_observed, grf_valid))
        except (ValueError, InputError) as exc:
            raise ParseError(str(exc), line=ln) from exc
    return Trial(header["subject"], header["skeleton"], dt, frames, meta,
                 marker_names, contact_names, activity, treadmill)


def trials_equal(a: Trial, b: Trial) -> bool:
    if (a.subject_id, a.skeleton_name, a.dt, a.activity, a.treadmill,
            a.marker_names, a.contact_names) != \
       (b.subject_id, b.skeleton_name, b.dt, b.activity, b.treadmill,
            b.marker_names, b.contact_names):
        return False
    if (a.meta.mass, a.meta.height, a.meta.age, a.meta.sex) != \
       (b.meta.mass, b.meta.height, b.meta.age, b.meta.sex):
        return False
    if a.length != b.length:
        return False
    for fa, fb in zip(a.frames, b.frames):
        if (fa.force_observed, fa.grf_valid) != (fb.force_observed, fb.grf_valid):
            return False
        if not np.array_equal(fa.wrenches, fb.wrenches):
            return False
        for ma, mb in zip(fa.marker_observations, fb.marker_observations):
            if (ma is None) != (mb is None):
                return False
            if ma is not None and not np.array_equal(ma, mb):
                return False
    return True


# ---------------------------------------------------------------------------
# post-processing rules

MIN_TRIAL_FRAMES = 12


@dataclass
class SegmentReport:
    dropped_frames: int = 0
    notes: list = field(default_factory=list)


def segment_trial(trial: Trial, max_len: int = 2000):
    """Split into segments of at most ``max_len`` frames.  A trailing
    remainder shorter than MIN_TRIAL_FRAMES is dropped and reported."""
    report = SegmentReport()
    segments = []
    for start in range(0, trial.length, max_len):
        chunk = trial.frames[start:start + max_len]
        if len(chunk) < MIN_TRIAL_FRAMES:
            report.dropped_frames += len(chunk)
            report.notes.append(
                f"dropped {len(chunk)}-frame remainder at frame {start} "
                f"(< {MIN_TRIAL_FRAMES} frames)")
            continue
        segments.append(Trial(trial.subject_id, trial.skeleton_name, trial.dt,
                              chunk, trial.meta, trial.marker_names,
                              trial.contact_names, trial.activity,
                              trial.treadmill))
    return segments, report


def classify_contact(frame: Frame, body_weight_N: float,
                     noise_floor_N: float = 10.0,
                     bw_fraction: float = 0.02) -> ContactPhase:
    """Contact phase from vertical foot forces.  A foot is loaded when its
    vertical force exceeds max(noise_floor_N, bw_fraction * body weight).
    Contact body 0 is the left foot, body 1 the right foot."""
    if frame.wrenches.shape[0] != 2:
        raise InputError("contact classification needs exactly two contact bodies")
    threshold = max(noise_floor_N, bw_fraction * body_weight_N)
    left = frame.wrenches[0, 4] > threshold
    right = frame.wrenches[1, 4] > threshold
    if left and right:
        return ContactPhase.double
    if left:
        return ContactPhase.single_left
    if right:
        return ContactPhase.single_right
    return ContactPhase.flight


def contact_phases(trial: Trial) -> list:
    bw = trial.meta.weight_newtons
    return [classify_contact(f, bw) for f in trial.frames]


def stance_intervals(phases, side: str, min_len: int = 5):
    """Maximal contiguous intervals (start, stop) where the given foot is
    loaded, keeping only those at least ``min_len`` frames long."""
    if side == "left":
        loaded = [p in (ContactPhase.double, ContactPhase.single_left)
                  for p in phases]
    elif side == "right":
        loaded = [p in (ContactPhase.double, ContactPhase.single_right)
                  for p in phases]
    else:
        raise InputError(f"side must be 'left' or 'right', got {side!r}")
    intervals = []
    start = None
    for t, on in enumerate(loaded + [False]):
        if on and start is None:
            start = t
        elif not on and start is not None:
            if t - start >= min_len:
                intervals.append((start, t))
            start = None
    return intervals


def average_trial_speed(skeleton: sk.Skeleton, trial: Trial,
                        poses: np.ndarray,
                        filter_cutoff_hz: float = 30.0) -> float:
    """Mean speed of a trial.

    Overground: mean norm of the filtered central first difference of the
    kinematic CoM.  Treadmill: ankle-joint-center horizontal displacement
    over stance duration, per stride, averaged over both sides.
    """
    poses = np.asarray(poses, dtype=float)
    if poses.shape[0] != trial.length:
        raise InputError("poses must align with trial frames")
    if not trial.treadmill:
        com = sk.center_of_mass(skeleton, poses)
        vel = central_difference1(TimeSeries(trial.dt, com))
        if com.shape[0] > 3 * 3:
            vel = butterworth_lowpass(vel, min(filter_cutoff_hz,
                                               0.49 / trial.dt), 3)
        return float(np.mean(np.linalg.norm(vel.samples, axis=1)))

    phases = contact_phases(trial)
    fk = sk.forward_kinematics(skeleton, poses)
    speeds = []
    for side, cb in zip(("left", "right"), skeleton.contact_bodies):
        ankle = fk[:, cb, :3, 3]
        for start, stop in stance_intervals(phases, side):
            disp = ankle[stop - 1, [0, 2]] - ankle[start, [0, 2]]
            duration = (stop - 1 - start) * trial.dt
            if duration > 0:
                speeds.append(np.linalg.norm(disp) / duration)
    if not speeds:
        raise InputError("treadmill trial has no detectable stance phases")
    return float(np.mean(speeds))


def subject_split(trials, ratios=(0.90, 0.05, 0.05), seed: int = 0):
    """Partition trials by subject into train/dev/test.

    Deterministic given ``seed``; every subject lands in exactly one split;
    dev and test get at least one subject each.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise InputError("split ratios must sum to 1")
    subjects = sorted({t.subject_id for t in trials})
    if len(subjects) < 3:
        raise InputError("need at least 3 distinct subjects to split")
    rng = np.random.default_rng(seed)
    order = [subjects[i] for i in rng.permutation(len(subjects))]
    n = len(subjects)
    n_dev = max(1, round(ratios[1] * n))
    n_test = max(1, round(ratios[2] * n))
    assignment = {}
    for s in order[:n_dev]:
        assignment[s] = "dev"
    for s in order[n_dev:n_dev + n_test]:
        assignment[s] = "test"
    for s in order[n_dev + n_test:]:
        assignment[s] = "train"
    out = {"train": [], "dev": [], "test": []}
    for t in trials:
        out[assignment[t.subject_id]].append(t)
    return out, assignment
