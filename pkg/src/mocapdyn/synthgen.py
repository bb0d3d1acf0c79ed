"""Ground-truth synthetic trial generation.

Motion comes from per-DOF scripts (offset + linear rate + sums of
sinusoids).  Pose derivatives are computed with the same differencing and
filtering pipeline the fitting stack uses, and the external wrenches are
then assigned per frame to make the root rows of the inverse-dynamics
equation vanish exactly: during double support the required total wrench is
split between the feet by a raised-cosine blend.  The resulting
(q, qdot, qddot, wrenches, tau) satisfy the equations of motion to
round-off, giving every downstream fit an exact oracle.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from . import skeleton as sk
from .errors import GenerationError, InputError, ParseError
from .kinefit import PoseSeries, pose_derivatives
from .trial_io import (SubjectMeta, Trial, contact_phases, stance_intervals,
                       trial_from_arrays)

# Standard derivative pipeline: a strong pose prefilter (double differencing
# amplifies marker noise by sqrt(6)/dt^2) followed by the standard 30 Hz
# smoothing of the differentiated signal.
PIPELINE_PREFILTER = ((6.0, 3),)
PIPELINE_CUTOFF = 30.0
PIPELINE_ORDER = 3


@dataclass
class DofScript:
    """q(t) = offset + rate * t + sum_i amp_i sin(2 pi freq_i t + phase_i)."""

    offset: float = 0.0
    rate: float = 0.0
    terms: list = field(default_factory=list)  # (amp, freq_hz, phase)

    def value(self, t: np.ndarray) -> np.ndarray:
        out = self.offset + self.rate * np.asarray(t, dtype=float)
        for amp, freq, phase in self.terms:
            out = out + amp * np.sin(2 * np.pi * freq * t + phase)
        return out


@dataclass
class ScenarioConfig:
    model: str = "biped12"
    duration: float = 2.0
    dt: float = 0.01
    scripts: dict = field(default_factory=dict)       # dof index -> DofScript
    left_stance: list = field(default_factory=list)   # (start, stop) frames
    right_stance: list = field(default_factory=list)
    marker_noise: float = 0.0
    force_noise: float = 0.0
    belt_speed: float | None = None
    seed: int = 0
    subject_mass: float | None = None
    subject_id: str = "synth"
    activity: str = "other"
    blend_frames: int = 12
    flight_force_tol: float = 80.0   # N; worse than this in flight -> error

    def __post_init__(self):
        if self.marker_noise < 0 or self.force_noise < 0:
            raise InputError("noise sigmas must be >= 0")
        if self.duration <= 0 or self.dt <= 0:
            raise InputError("duration and dt must be > 0")

    @property
    def n_frames(self) -> int:
        return int(round(self.duration / self.dt))


@dataclass
class GroundTruth:
    poses: PoseSeries                # with qd / qdd filled (pipeline values)
    wrenches: np.ndarray             # (T, 2, 6), noise-free
    tau: np.ndarray                  # (T, N), root entries zeroed
    com: np.ndarray                  # (T, 3)
    com_acc: np.ndarray              # (T, 3)
    split_weights: np.ndarray        # (T, 2) raised-cosine foot weights
    skeleton: sk.Skeleton = None


def _stance_weights(intervals, T, blend):
    """Per-frame raised-cosine stance weight for one foot: 0 outside stance,
    smooth ramps of ``blend`` frames at each interval edge, 1 mid-stance."""
    w = np.zeros(T)
    for start, stop in intervals:
        start, stop = max(0, start), min(T, stop)
        n = stop - start
        if n <= 0:
            continue
        ramp = min(blend, n // 2)
        prof = np.ones(n)
        if ramp > 0:
            edge = 0.5 - 0.5 * np.cos(np.pi * (np.arange(ramp) + 1) / (ramp + 1))
            prof[:ramp] = edge
            prof[n - ramp:] = edge[::-1]
        w[start:stop] = np.maximum(w[start:stop], prof)
    return w


def _root_wrench_targets(skel, st, resid):
    """Total required force and moment (about the root origin) per frame."""
    f_tot = resid[:, 3:6]
    # columns of E are the world axes of the root's three elementary rotations
    E = np.stack([st.dof_axis[i] for i in range(3)], axis=-1)   # (T, 3, 3)
    m_tot = np.linalg.solve(np.swapaxes(E, -1, -2), resid[:, 0:3, None])[..., 0]
    origin = st.dof_origin[0]
    return f_tot, m_tot, origin


def generate(config: ScenarioConfig):
    """Build (Trial, GroundTruth) from a scenario description."""
    skel = sk.builtin_models()[config.model]
    if config.subject_mass is not None:
        skel = skel.with_mass_scale(config.subject_mass / skel.total_mass)
    T = config.n_frames
    if T < 13:
        raise InputError("scenario too short for the filtering pipeline")
    t = np.arange(T) * config.dt

    Q = np.zeros((T, skel.dof_count))
    for dof, script in config.scripts.items():
        Q[:, dof] = script.value(t)

    poses = PoseSeries(config.dt, Q)
    qd, qdd = pose_derivatives(poses, PIPELINE_CUTOFF, PIPELINE_ORDER,
                               prefilter=PIPELINE_PREFILTER)

    w_l = _stance_weights(config.left_stance, T, config.blend_frames)
    w_r = _stance_weights(config.right_stance, T, config.blend_frames)
    w_sum = w_l + w_r
    flight = w_sum <= 0.0

    st = sk.kin_state(skel, Q, qd)
    resid = sk.generalized_forces(skel, Q, qd, qdd, state=st)

    # flight frames must be (nearly) ballistic; small inconsistencies from
    # the filtering pipeline are projected out of the root accelerations
    if flight.any():
        bad = np.linalg.norm(resid[flight][:, 3:6], axis=1)
        if bad.max() > config.flight_force_tol:
            raise GenerationError(
                f"script demands {bad.max():.1f} N of external force during "
                f"flight (tolerance {config.flight_force_tol} N)")
        M = sk.mass_matrix(skel, Q[flight], state=None)
        idx = np.nonzero(flight)[0]
        # root rows of M qdd = C  =>  qdd_root = Mrr^-1 (C_r - Mrj qdd_j)
        C = sk.bias_forces(skel, Q[flight], qd[flight])
        rhs = (C[:, :6]
               - np.einsum("tkl,tl->tk", M[:, :6, 6:], qdd[flight][:, 6:]))
        qdd[idx, :6] = np.linalg.solve(M[:, :6, :6], rhs[..., None])[..., 0]
        resid = sk.generalized_forces(skel, Q, qd, qdd, state=st)
    poses.qd, poses.qdd = qd, qdd

    f_tot, m_tot, origin = _root_wrench_targets(skel, st, resid)
    lam = np.zeros((T, 2))
    active = ~flight
    lam[active, 0] = w_l[active] / w_sum[active]
    lam[active, 1] = w_r[active] / w_sum[active]

    wrenches = np.zeros((T, 2, 6))
    for i, cb in enumerate(skel.contact_bodies):
        p = st.p[cb]
        f_i = lam[:, i, None] * f_tot
        m_i = lam[:, i, None] * m_tot - np.cross(p - origin, f_i)
        wrenches[:, i, 0:3] = m_i
        wrenches[:, i, 3:6] = f_i
    wrenches[flight] = 0.0

    tau = sk.generalized_forces(skel, Q, qd, qdd, wrenches=wrenches, state=st)
    root_leak = np.max(np.abs(tau[:, :6]))
    if root_leak > 1e-6:
        raise GenerationError(
            f"wrench assignment left {root_leak:.2e} root residual")
    tau[:, :6] = 0.0

    com = sk.center_of_mass(skel, Q, state=st)
    com_acc = sk.com_acceleration(skel, Q, qd, qdd, state=st)

    rng = np.random.default_rng(config.seed)
    markers = sk.virtual_markers(skel, Q, state=st).copy()
    if config.marker_noise > 0:
        markers = markers + rng.normal(0, config.marker_noise, markers.shape)
    noisy = wrenches.copy()
    if config.force_noise > 0:
        noise = rng.normal(0, config.force_noise, noisy.shape)
        noise[lam == 0.0] = 0.0          # unloaded feet stay exactly zero
        noisy = noisy + noise

    trial = trial_from_arrays(
        config.subject_id, config.model, config.dt, markers, noisy,
        SubjectMeta(skel.total_mass, skel.subject_height),
        marker_names=[m.name for m in skel.markers],
        contact_names=[skel.bodies[c].name for c in skel.contact_bodies],
        activity=_activity(config.activity),
        treadmill=config.belt_speed is not None)
    truth = GroundTruth(poses, wrenches, tau, com, com_acc, lam, skel)
    return trial, truth


def _activity(name: str):
    from .trial_io import Activity
    try:
        return Activity(name)
    except ValueError:
        return Activity.other


# ---------------------------------------------------------------------------
# scenario factories

_ROOT_Y_STAND = 0.9    # hip 0.05 + thigh 0.42 + shank 0.43 puts feet at y=0


def standing_scenario(duration=2.0, subject_mass=None, marker_noise=0.0,
                      force_noise=0.0, seed=0, sway=0.0) -> ScenarioConfig:
    cfg = ScenarioConfig(
        model="biped12", duration=duration, subject_mass=subject_mass,
        marker_noise=marker_noise, force_noise=force_noise, seed=seed,
        activity="standing")
    cfg.scripts = {4: DofScript(offset=_ROOT_Y_STAND)}
    if sway:
        cfg.scripts[3] = DofScript(terms=[(sway, 0.4, 0.0)])
        cfg.scripts[5] = DofScript(terms=[(sway, 0.3, 1.0)])
    T = cfg.n_frames
    cfg.left_stance = [(0, T)]
    cfg.right_stance = [(0, T)]
    return cfg


def _gait_scripts(speed, stride_hz, hip_amp, treadmill=False):
    """Leg scripts for a walking gait; left leg phase-shifted by half a cycle."""
    w = stride_hz
    scripts = {
        4: DofScript(offset=_ROOT_Y_STAND - 0.01,
                     terms=[(0.012, 2 * w, 0.5)]),
        # hips counter-swing; knees flex mid-swing; ankles rock gently
        6: DofScript(terms=[(hip_amp, w, 0.0)]),
        9: DofScript(terms=[(hip_amp, w, np.pi)]),
        7: DofScript(offset=-0.25, terms=[(0.22, w, -np.pi / 2)]),
        10: DofScript(offset=-0.25, terms=[(0.22, w, np.pi / 2)]),
        8: DofScript(terms=[(0.08, w, 0.6)]),
        11: DofScript(terms=[(0.08, w, 0.6 + np.pi)]),
    }
    if not treadmill:
        scripts[3] = DofScript(rate=speed, terms=[(0.01, w, 0.3)])
    return scripts


def _gait_schedule(T, dt, stride_hz, duty=0.62):
    """Alternating stance intervals covering every frame (>= 1 foot down)."""
    cycle = int(round(1.0 / (stride_hz * dt)))
    stance = int(round(duty * cycle))
    left, right = [], []
    start = -cycle // 2
    k = 0
    while start < T:
        s = max(0, start)
        e = min(T, start + stance)
        if e > s:
            (left if k % 2 == 0 else right).append((s, e))
        start += cycle // 2
        k += 1
    return left, right


def walking_scenario(duration=5.0, speed=1.2, stride_hz=0.9, subject_mass=None,
                     marker_noise=0.0, force_noise=0.0, seed=0,
                     hip_amp=0.35) -> ScenarioConfig:
    cfg = ScenarioConfig(
        model="biped12", duration=duration, subject_mass=subject_mass,
        marker_noise=marker_noise, force_noise=force_noise, seed=seed,
        activity="walking")
    cfg.scripts = _gait_scripts(speed, stride_hz, hip_amp)
    cfg.left_stance, cfg.right_stance = _gait_schedule(cfg.n_frames, cfg.dt,
                                                       stride_hz)
    return cfg


def hopping_scenario(duration=4.0, hop_hz=1.3, subject_mass=None,
                     marker_noise=0.0, force_noise=0.0, seed=0,
                     flight_fraction=0.12) -> ScenarioConfig:
    """Two-footed hops: root height is a sinusoid whose peak acceleration is
    exactly -g, and the flight window sits at the apex so the ballistic
    constraint holds to within the projection tolerance."""
    cfg = ScenarioConfig(
        model="biped12", duration=duration, subject_mass=subject_mass,
        marker_noise=marker_noise, force_noise=force_noise, seed=seed,
        activity="jumping")
    w = 2 * np.pi * hop_hz
    amp = 9.81 / w ** 2
    cfg.scripts = {4: DofScript(offset=_ROOT_Y_STAND - 0.05,
                                terms=[(amp, hop_hz, 0.0)])}
    T = cfg.n_frames
    cycle = 1.0 / hop_hz
    half_flight = 0.5 * flight_fraction * cycle
    stance = []
    # the sinusoid peaks at t = cycle / 4 (mod cycle)
    apex = cycle / 4
    prev_end = 0
    while apex - half_flight < T * cfg.dt:
        fs = int(round((apex - half_flight) / cfg.dt))
        fe = int(round((apex + half_flight) / cfg.dt))
        if fs > prev_end:
            stance.append((prev_end, min(fs, T)))
        prev_end = fe
        apex += cycle
    if prev_end < T:
        stance.append((prev_end, T))
    cfg.left_stance = list(stance)
    cfg.right_stance = list(stance)
    return cfg


def treadmill_scenario(duration=5.0, belt_speed=1.1, stride_hz=0.9,
                       subject_mass=None, marker_noise=0.0, force_noise=0.0,
                       seed=0) -> ScenarioConfig:
    """Walking in place; the hip swing amplitude is calibrated numerically so
    the ankle travels at the requested belt speed during stance."""
    def mean_stance_speed(hip_amp):
        cfg = ScenarioConfig(model="biped12", duration=duration,
                             activity="walking")
        cfg.scripts = _gait_scripts(0.0, stride_hz, hip_amp, treadmill=True)
        left, right = _gait_schedule(cfg.n_frames, cfg.dt, stride_hz)
        skel = sk.builtin_models()["biped12"]
        t = np.arange(cfg.n_frames) * cfg.dt
        Q = np.zeros((cfg.n_frames, skel.dof_count))
        for dof, script in cfg.scripts.items():
            Q[:, dof] = script.value(t)
        fk = sk.forward_kinematics(skel, Q)
        speeds = []
        for intervals, cb in ((left, 3), (right, 6)):
            ankle = fk[:, cb, :3, 3]
            for s, e in intervals:
                if e - s < 5:
                    continue
                disp = np.linalg.norm(ankle[e - 1, [0, 2]] - ankle[s, [0, 2]])
                speeds.append(disp / ((e - 1 - s) * 0.01))
        return float(np.mean(speeds))

    from scipy.optimize import brentq
    hip_amp = brentq(lambda a: mean_stance_speed(a) - belt_speed, 0.02, 1.2,
                     xtol=1e-4)

    cfg = ScenarioConfig(
        model="biped12", duration=duration, subject_mass=subject_mass,
        marker_noise=marker_noise, force_noise=force_noise, seed=seed,
        belt_speed=belt_speed, activity="walking")
    cfg.scripts = _gait_scripts(0.0, stride_hz, hip_amp, treadmill=True)
    cfg.left_stance, cfg.right_stance = _gait_schedule(cfg.n_frames, cfg.dt,
                                                       stride_hz)
    return cfg


# ---------------------------------------------------------------------------
# force hiding

def hide_forces(trial: Trial, k: int = 3, foot: str = "right",
                min_step_frames: int = 5):
    """Hide the force data of every k-th step of the given foot.

    A step is a maximal contiguous interval of that foot being loaded, at
    least ``min_step_frames`` long.  Hidden frames get force_observed =
    False and zeroed wrenches.  Returns (new_trial, hidden) where hidden
    maps 1-based frame index -> the original (n_contacts, 6) wrench array.
    """
    if k < 1:
        raise InputError("k must be >= 1")
    phases = contact_phases(trial)
    steps = stance_intervals(phases, foot, min_len=min_step_frames)
    hidden = {}
    frames = [f for f in trial.frames]
    from .trial_io import Frame
    for step_no, (s, e) in enumerate(steps, start=1):
        if step_no % k != 0:
            continue
        for fr in range(s, e):
            hidden[fr + 1] = trial.frames[fr].wrenches.copy()
            frames[fr] = Frame(trial.frames[fr].marker_observations,
                               np.zeros_like(trial.frames[fr].wrenches),
                               force_observed=False,
                               grf_valid=trial.frames[fr].grf_valid)
    out = Trial(trial.subject_id, trial.skeleton_name, trial.dt, frames,
                trial.meta, trial.marker_names, trial.contact_names,
                trial.activity, trial.treadmill)
    return out, hidden


def add_plate_drift(trial: Trial, sigma: float = 25.0,
                    freqs=(0.1, 0.2), seed: int = 0) -> Trial:
    """Overlay a slow sinusoidal force error on the loaded feet, in place.

    Emulates force-plate drift / soft-tissue error: per foot and axis, a
    sum of sinusoids at the given frequencies with Gaussian amplitudes
    (sigma newtons) and random phases.  Unloaded feet stay exactly zero so
    contact classification is unaffected.  Returns the trial.
    """
    if sigma < 0:
        raise InputError("sigma must be >= 0")
    rng = np.random.default_rng(seed)
    T = trial.length
    t = np.arange(T) * trial.dt
    for foot in range(trial.n_contacts):
        err = np.zeros((T, 3))
        for axis in range(3):
            for f_hz in freqs:
                err[:, axis] += rng.normal(0, sigma) * np.sin(
                    2 * np.pi * f_hz * t + rng.uniform(0, 2 * np.pi))
        for k in range(T):
            w = trial.frames[k].wrenches
            if np.any(w[foot] != 0.0):
                w[foot, 3:6] += err[k]
    return trial


# ---------------------------------------------------------------------------
# companion ground-truth files

TRUTH_HEADER = "truth v1"


def save_truth(truth: GroundTruth, path) -> None:
    """Row-aligned companion file for a generated trial: per frame q, qd,
    qdd, both wrenches, tau, and the CoM position."""
    q = truth.poses.q
    T, N = q.shape
    buf = io.StringIO()
    buf.write(TRUTH_HEADER + "\n")
    buf.write(f"dt {repr(float(truth.poses.dt))}\n")
    buf.write(f"dofs {N}\n")
    buf.write(f"contacts {truth.wrenches.shape[1]}\n")
    buf.write("data\n")
    for ti in range(T):
        row = np.concatenate([q[ti], truth.poses.qd[ti], truth.poses.qdd[ti],
                              truth.wrenches[ti].ravel(), truth.tau[ti],
                              truth.com[ti], truth.com_acc[ti]])
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def load_truth(path) -> GroundTruth:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != TRUTH_HEADER:
        raise ParseError(f"expected header {TRUTH_HEADER!r}", line=1)
    header = {}
    data_start = None
    for ln, line in enumerate(lines[1:], start=2):
        if line.strip() == "data":
            data_start = ln
            break
        key, _, value = line.partition(" ")
        header[key] = value
    if data_start is None:
        raise ParseError("missing 'data' section")
    try:
        dt = float(header["dt"])
        N = int(header["dofs"])
        nc = int(header["contacts"])
    except (KeyError, ValueError) as exc:
        raise ParseError(f"bad header: {exc}") from exc
    rows = []
    want = 3 * N + 6 * nc + N + 6
    for i, line in enumerate(lines[data_start:]):
        vals = line.split(",")
        if len(vals) != want:
            raise ParseError(f"row has {len(vals)} values, expected {want}",
                             line=data_start + 1 + i)
        rows.append([float(v) for v in vals])
    arr = np.array(rows)
    q, qd, qdd = arr[:, :N], arr[:, N:2 * N], arr[:, 2 * N:3 * N]
    ofs = 3 * N
    wr = arr[:, ofs:ofs + 6 * nc].reshape(-1, nc, 6)
    ofs += 6 * nc
    tau = arr[:, ofs:ofs + N]
    ofs += N
    com = arr[:, ofs:ofs + 3]
    com_acc = arr[:, ofs + 3:ofs + 6]
    poses = PoseSeries(dt, q, qd, qdd)
    lam = np.zeros((arr.shape[0], nc))
    return GroundTruth(poses, wr, tau, com, com_acc, lam)
