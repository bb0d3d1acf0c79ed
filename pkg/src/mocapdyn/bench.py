"""Benchmark metrics, the consistent-filtering sweep, and the
hidden-step ablation harness.

Metric conventions (documented here because the aggregation is a choice):
* wrench errors concatenate both feet into one 12-vector per frame and
  take the L2 of the moment / force parts, mass-normalized;
* reports pool frames (not per-trial averages), which makes merging
  reports associative and order-independent.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import io
from dataclasses import dataclass, field

import numpy as np

from . import skeleton as sk
from .baselines import analytical_predict
from .comfit import (GRAVITY_VEC, UnobservedSet, adjust_root_translation,
                     solve_com)
from .dynfit import (DynConfig, filter_residual_series, fit_trial, full_fit)
from .errors import InputError
from .kinefit import PoseSeries, fit_kinematics
from .signals import TimeSeries, butterworth_lowpass
from .synthgen import hide_forces
from .trial_io import Trial, contact_phases, stance_intervals

STANDARD_CUTOFF_HZ = 30.0


# ---------------------------------------------------------------------------
# metrics

@dataclass
class Prediction:
    """Aligned per-frame model outputs for one trial."""

    dt: float
    com_acc: np.ndarray        # (T, 3) m/s^2
    wrenches: np.ndarray       # (T, 2, 6) moment-first foot wrenches, N / N*m
    tau: np.ndarray            # (T, N) joint torques, N*m
    filter_cutoff_hz: float = STANDARD_CUTOFF_HZ
    activity: str | None = None

    def __post_init__(self):
        self.com_acc = np.asarray(self.com_acc, dtype=float)
        self.wrenches = np.asarray(self.wrenches, dtype=float)
        self.tau = np.asarray(self.tau, dtype=float)
        T = self.com_acc.shape[0]
        if self.wrenches.shape[0] != T or self.tau.shape[0] != T:
            raise InputError("prediction series lengths disagree")


@dataclass
class EvalReport:
    """The four benchmark metrics (all mass-normalized where stated)."""

    com_acc_err: float         # mean L2, m/s^2
    grm_err: float             # mean L2 of both-feet moments, N*m/kg
    grf_err: float             # mean L2 of both-feet forces, N/kg
    torque_err: float          # mean L1 per torque entry, N*m/kg
    n_frames: int
    filter_cutoff_hz: float = STANDARD_CUTOFF_HZ
    per_activity: dict = field(default_factory=dict)
    marker_rms_cm: float | None = None
    linear_residual_BW: float | None = None
    angular_residual_BWh: float | None = None

    def metrics(self):
        return (self.com_acc_err, self.grm_err, self.grf_err,
                self.torque_err)


def _check_aligned(pred: Prediction, truth: Prediction):
    if pred.com_acc.shape[0] != truth.com_acc.shape[0]:
        raise InputError("prediction / truth length mismatch")
    if pred.dt != truth.dt:
        raise InputError("prediction / truth dt mismatch")
    if pred.filter_cutoff_hz != truth.filter_cutoff_hz:
        raise InputError(
            "prediction and truth were filtered differently; metrics "
            "require a consistent amount of smoothing")
    if pred.tau.shape != truth.tau.shape:
        raise InputError("torque shape mismatch")
    if pred.wrenches.shape != truth.wrenches.shape:
        raise InputError("wrench shape mismatch")


def evaluate(predictions: Prediction, ground_truth: Prediction,
             subject_meta) -> EvalReport:
    """Four pooled-frame benchmark metrics for one aligned trial."""
    _check_aligned(predictions, ground_truth)
    mass = subject_meta.mass
    d_acc = predictions.com_acc - ground_truth.com_acc
    d_w = (predictions.wrenches - ground_truth.wrenches)
    d_tau = predictions.tau - ground_truth.tau
    T = d_acc.shape[0]
    com_err = float(np.mean(np.linalg.norm(d_acc, axis=1)))
    d_m = d_w[:, :, 0:3].reshape(T, 6)
    d_f = d_w[:, :, 3:6].reshape(T, 6)
    grm = float(np.mean(np.linalg.norm(d_m, axis=1))) / mass
    grf = float(np.mean(np.linalg.norm(d_f, axis=1))) / mass
    torque = float(np.mean(np.abs(d_tau))) / mass
    report = EvalReport(com_err, grm, grf, torque, T,
                        predictions.filter_cutoff_hz)
    if predictions.activity is not None:
        report.per_activity[predictions.activity] = (com_err, grm, grf,
                                                     torque)
    return report


def merge_reports(reports) -> EvalReport:
    """Frame-weighted merge; associative and order-independent because the
    underlying metrics pool frames."""
    reports = list(reports)
    if not reports:
        raise InputError("nothing to merge")
    cutoff = reports[0].filter_cutoff_hz
    if any(r.filter_cutoff_hz != cutoff for r in reports):
        raise InputError("cannot merge reports with different filtering")
    n = sum(r.n_frames for r in reports)
    sums = np.zeros(4)
    per_activity = {}
    for r in reports:
        sums += np.array(r.metrics()) * r.n_frames
        per_activity.update(r.per_activity)
    m = sums / n
    return EvalReport(float(m[0]), float(m[1]), float(m[2]), float(m[3]), n,
                      cutoff, per_activity)


# ---------------------------------------------------------------------------
# filtering sweep

def _grf_error(pred_wrenches, truth_forces, mass):
    T = len(truth_forces)
    d = pred_wrenches[:, :, 3:6].reshape(T, 6) - truth_forces.reshape(T, 6)
    return float(np.mean(np.linalg.norm(d, axis=1))) / mass


def filter_sweep(predictor, trials, cutoffs, csv_path=None):
    """GRF error of a kinematic predictor at each cutoff, against force
    truth re-filtered at the same cutoff.

    ``trials`` is a list of (skeleton, trial, poses); ``predictor`` takes
    (skeleton, poses, contact_phases, mass, cutoff_hz) and returns
    (T, 2, 6) wrenches.  Returns [(cutoff_hz, grf_err_N_per_kg), ...].
    """
    cutoffs = [float(c) for c in cutoffs]
    if sorted(cutoffs) != cutoffs:
        raise InputError("cutoffs must be ascending")
    rows = []
    for cutoff in cutoffs:
        num = 0.0
        n = 0
        for skeleton, trial, poses in trials:
            if cutoff >= 0.5 / trial.dt:
                raise InputError(
                    f"cutoff {cutoff} Hz is not below the Nyquist "
                    f"frequency {0.5 / trial.dt} Hz")
            phases = contact_phases(trial)
            pred = predictor(skeleton, poses, phases, trial.meta.mass,
                             cutoff)
            truth = trial.wrench_array()[:, :, 3:6]
            truth = butterworth_lowpass(
                TimeSeries(trial.dt, truth.reshape(trial.length, 6)),
                cutoff, 3).samples.reshape(trial.length, 2, 3)
            num += _grf_error(pred, truth, trial.meta.mass) * trial.length
            n += trial.length
        rows.append((cutoff, num / n))
    if csv_path is not None:
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["cutoff_hz", "grf_err_N_per_kg"])
            for cutoff, err in rows:
                w.writerow([repr(cutoff), repr(err)])
    return rows


def analytical_sweep_predictor(skeleton, poses, phases, mass, cutoff_hz):
    return analytical_predict(skeleton, poses, phases, mass, cutoff_hz)


# ---------------------------------------------------------------------------
# ablation

@dataclass
class AblationConfig:
    k: int = 3
    foot: str = "right"
    alpha: float = 1e-3
    knee_dof: int = 10          # right knee flexion in the 12-DOF biped
    kin_config: object = None
    dyn_config: DynConfig | None = None
    min_segment: int = 8


@dataclass
class MethodResult:
    linear_residual_N: float
    marker_rms_cm: float
    knee_torque: np.ndarray
    com_velocity: np.ndarray
    marker_hash: str


@dataclass
class AblationResult:
    methods: dict               # name -> MethodResult
    hidden_frames: list         # 1-based
    segment_boundaries: list    # 0-based first frames of observed segments

    def table(self):
        return [(name, m.linear_residual_N, m.marker_rms_cm)
                for name, m in self.methods.items()]


def _marker_hash(trial) -> str:
    return hashlib.sha256(
        np.ascontiguousarray(trial.marker_array()).tobytes()).hexdigest()


def _method_result(fit, trial, knee_dof, score_mask) -> MethodResult:
    # All methods are scored over the same (observed) frames so the
    # residual numbers are comparable across pipelines.  The residual
    # series is used as the pipeline produced it (accelerations are
    # already low-passed); no extra report smoothing, which would blur
    # out exactly the boundary artifacts this harness measures.
    norms = np.linalg.norm(fit.residual_linear[score_mask], axis=1)
    resid = float(np.sqrt(np.mean(norms ** 2))) if score_mask.any() else 0.0
    com = sk.center_of_mass(fit.skeleton, fit.poses.q)
    if com.shape[0] > 12:
        com = butterworth_lowpass(TimeSeries(trial.dt, com), 10.0, 3).samples
    vel = np.diff(com, axis=0) / trial.dt
    return MethodResult(resid, fit.marker_rms * 100.0,
                        fit.tau[:, knee_dof].copy(), vel,
                        _marker_hash(trial))


def _observed_segments(mask):
    """Maximal contiguous runs of observed frames as (start, end) 0-based."""
    segs = []
    t = 0
    T = len(mask)
    while t < T:
        if not mask[t]:
            t += 1
            continue
        s = t
        while t < T and mask[t]:
            t += 1
        segs.append((s, t))
    return segs


def _sub_trial(trial, s, e) -> Trial:
    return Trial(trial.subject_id, trial.skeleton_name, trial.dt,
                 trial.frames[s:e], trial.meta, trial.marker_names,
                 trial.contact_names, trial.activity, trial.treadmill)


def _piecewise_poses(skeleton, trial, kin_fit, alpha, min_segment):
    """Stitched initialization from an independent CoM fit and root
    adjustment per maximal observed segment; hidden gaps keep the raw
    marker-fit poses.  Nothing couples the segments, so each one picks its
    own initial position and velocity, and the stitched trajectory is
    discontinuous at segment boundaries."""
    scaled = skeleton.with_scales(kin_fit.scales)
    q = kin_fit.poses.q.copy()
    segments = _observed_segments(trial.observed_mask())
    for s, e in segments:
        if e - s < min_segment:
            continue
        seg_trial = _sub_trial(trial, s, e)
        seg_poses = PoseSeries(trial.dt, kin_fit.poses.q[s:e].copy())
        com = sk.center_of_mass(scaled, seg_poses.q)
        sol = solve_com(seg_trial, com, UnobservedSet([]), alpha)
        adjusted = adjust_root_translation(scaled, seg_poses, sol)
        q[s:e] = adjusted.q
    return PoseSeries(trial.dt, q), [s for s, _ in segments]


def run_ablation(skeleton, trial, config: AblationConfig | None = None
                 ) -> AblationResult:
    """Hidden-step ablation: oracle (all forces) vs the linear-initialized
    fit vs independent per-segment fits, on byte-identical marker data."""
    cfg = config or AblationConfig()
    steps = stance_intervals(contact_phases(trial), cfg.foot)
    if len(steps) < 3:
        raise InputError(f"need at least 3 {cfg.foot}-foot steps, "
                         f"found {len(steps)}")
    dyn_cfg = cfg.dyn_config or DynConfig()
    if cfg.k > 0:
        hidden_trial, hidden = hide_forces(trial, cfg.k, cfg.foot)
    else:
        hidden_trial, hidden = copy.deepcopy(trial), {}
    U = UnobservedSet.from_trial(hidden_trial)

    # one shared marker fit: all three pipelines see identical kinematics
    kin = fit_kinematics(skeleton, trial, cfg.kin_config)
    hashes = {_marker_hash(trial), _marker_hash(hidden_trial)}
    assert len(hashes) == 1, "marker streams diverged between pipelines"

    score_mask = hidden_trial.observed_mask()
    methods = {}
    # oracle: every wrench observed
    oracle_fit, _, _ = fit_trial(skeleton, trial, dyn_config=dyn_cfg,
                                 alpha=cfg.alpha, U=UnobservedSet([]),
                                 kin_fit=kin)
    methods["oracle"] = _method_result(oracle_fit, trial, cfg.knee_dof,
                                       score_mask)
    # our method: linear CoM initialization over the hidden frames
    ours_fit, _, _ = fit_trial(skeleton, hidden_trial, dyn_config=dyn_cfg,
                               alpha=cfg.alpha, U=U, kin_fit=kin)
    methods["ours"] = _method_result(ours_fit, hidden_trial, cfg.knee_dof,
                                     score_mask)
    # piecewise: fully independent per-segment fits stitched together and
    # evaluated as-is — no joint pass, since coupling the segments is
    # exactly what distinguishes the linear-initialization method
    pw_poses, boundaries = _piecewise_poses(skeleton, hidden_trial, kin,
                                            cfg.alpha, cfg.min_segment)
    eval_cfg = copy.deepcopy(dyn_cfg)
    eval_cfg.max_outer = 0
    pw_fit = full_fit(skeleton, hidden_trial, pw_poses,
                      scales=kin.scales, U=U, config=eval_cfg)
    methods["piecewise"] = _method_result(pw_fit, hidden_trial,
                                          cfg.knee_dof, score_mask)
    return AblationResult(methods, sorted(hidden), boundaries)


def export_ablation(result: AblationResult, table_path, trace_path) -> None:
    """CSV exports: the residual table and the right-knee torque traces."""
    with open(table_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "linear_residual_N", "marker_rms_cm"])
        for name, resid, rms in result.table():
            w.writerow([name, repr(resid), repr(rms)])
    names = list(result.methods)
    traces = [result.methods[n].knee_torque for n in names]
    with open(trace_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame"] + [f"knee_torque_{n}_Nm" for n in names])
        for t in range(len(traces[0])):
            w.writerow([t + 1] + [repr(float(tr[t])) for tr in traces])
