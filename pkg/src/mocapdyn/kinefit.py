"""Inverse kinematics with bone scaling.

Recovers per-frame poses and per-body scale factors from marker
trajectories by minimizing the distance between virtual markers attached to
the skeleton and their observations.  The solver alternates per-frame
damped Gauss-Newton pose solves (analytic marker Jacobians, warm-started
from the previous frame) with a global Gauss-Newton solve over bone scales,
so the outer-loop marker RMS is non-increasing by construction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import skeleton as sk
from .errors import ConvergenceWarning, FitError, InputError
from .signals import (TimeSeries, butterworth_lowpass, central_difference1,
                      central_difference2, filter_cascade)

MIN_MARKERS = 4


@dataclass
class PoseSeries:
    """Pose trajectory q (T, N) at a fixed frame rate, with optional
    derivatives filled in by ``pose_derivatives``."""

    dt: float
    q: np.ndarray
    qd: np.ndarray | None = None
    qdd: np.ndarray | None = None

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        if self.q.ndim != 2:
            raise InputError("q must be (T, N)")
        if not self.dt > 0:
            raise InputError("dt must be > 0")

    @property
    def length(self) -> int:
        return self.q.shape[0]


@dataclass
class KinConfig:
    max_outer: int = 3
    rms_tol: float = 1e-5          # outer-loop RMS improvement threshold (m)
    max_pose_iters: int = 30
    pose_step_tol: float = 1e-12
    lambda_init: float = 1e-3
    fail_rms: float = 0.2          # m; worse than this after fitting -> FitError
    fit_scales: bool = True
    scale_bounds: tuple = (0.5, 2.0)
    max_scale_iters: int = 10
    scale_fd_step: float = 1e-6


@dataclass
class KinematicFit:
    poses: PoseSeries
    scales: np.ndarray             # (n_bodies, 3)
    marker_rms: float
    per_frame_marker_error: list
    interpolated_frames: list = field(default_factory=list)
    rms_history: list = field(default_factory=list)


def _frame_residual(skel, q, observed, obs_idx):
    """Residual virtual - observed for one frame, stacked (3 * n_obs,)."""
    vm = sk.virtual_markers(skel, q)
    return (vm[obs_idx] - observed[obs_idx]).ravel()


def _frame_jacobian(skel, q, obs_idx):
    J = sk.marker_jacobian(skel, sk.kin_state(skel, q[None]))[0]  # (3M, N)
    rows = np.concatenate([np.arange(3 * k, 3 * k + 3) for k in obs_idx])
    return J[rows]


def _solve_pose(skel, q0, observed, obs_idx, cfg: KinConfig):
    """Damped Gauss-Newton on marker residuals for a single frame."""
    q = q0.copy()
    r = _frame_residual(skel, q, observed, obs_idx)
    cost = float(r @ r)
    lam = cfg.lambda_init
    for _ in range(cfg.max_pose_iters):
        J = _frame_jacobian(skel, q, obs_idx)
        JtJ = J.T @ J
        g = J.T @ r
        stepped = False
        for _ in range(12):
            try:
                dq = np.linalg.solve(JtJ + lam * np.eye(len(q)), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            r_new = _frame_residual(skel, q + dq, observed, obs_idx)
            cost_new = float(r_new @ r_new)
            if cost_new < cost:
                q = q + dq
                r, cost = r_new, cost_new
                lam = max(lam / 10.0, 1e-12)
                stepped = True
                break
            lam *= 10.0
        if not stepped or np.linalg.norm(dq) < cfg.pose_step_tol:
            break
        if cost < 1e-24:
            break
    return q, cost


def _marker_errors(skel, Q, markers, obs_mask):
    """Per-frame RMS marker error and overall RMS over observed markers."""
    vm = sk.virtual_markers(skel, Q)                  # (T, M, 3)
    d2 = np.sum((vm - np.nan_to_num(markers)) ** 2, axis=2)
    per_frame = []
    total = 0.0
    count = 0
    for t in range(Q.shape[0]):
        idx = obs_mask[t]
        if idx.any():
            per_frame.append(float(np.sqrt(np.mean(d2[t, idx]))))
            total += float(np.sum(d2[t, idx]))
            count += int(idx.sum())
        else:
            per_frame.append(float("nan"))
    rms = float(np.sqrt(total / count)) if count else float("nan")
    return rms, per_frame


def _interpolate_poses(Q, solved):
    """Linearly interpolate pose rows whose frames had no observations."""
    idx = np.nonzero(solved)[0]
    out = Q.copy()
    for c in range(Q.shape[1]):
        out[:, c] = np.interp(np.arange(Q.shape[0]), idx, Q[idx, c])
    return out


def fit_kinematics(skel: sk.Skeleton, trial, config: KinConfig | None = None,
                   init_scales: np.ndarray | None = None,
                   init_poses: np.ndarray | None = None) -> KinematicFit:
    cfg = config or KinConfig()
    markers = trial.marker_array()                    # (T, M, 3), NaN occluded
    T, M, _ = markers.shape
    if M != len(skel.markers):
        raise InputError(
            f"trial has {M} markers but skeleton defines {len(skel.markers)}")
    obs_mask = ~np.any(np.isnan(markers), axis=2)     # (T, M)
    fit_frames = np.nonzero(obs_mask.sum(axis=1) >= MIN_MARKERS)[0]
    if len(fit_frames) == 0:
        raise InputError(
            f"no frame has at least {MIN_MARKERS} observed markers")

    scales = (np.ones((skel.n_bodies, 3)) if init_scales is None
              else np.asarray(init_scales, dtype=float).copy())
    cur = skel.with_scales(scales)

    Q = np.zeros((T, skel.dof_count)) if init_poses is None \
        else np.asarray(init_poses, dtype=float).copy()
    if init_poses is None:
        t0 = fit_frames[0]
        centroid = markers[t0][obs_mask[t0]].mean(axis=0)
        Q[:, 3:6] = centroid                          # root translation guess

    solvable = obs_mask.sum(axis=1) >= 1
    interpolated = [int(t) for t in np.nonzero(~solvable)[0]]

    rms_history = []
    rms = np.inf
    for outer in range(cfg.max_outer):
        # (a) per-frame pose solves, warm-started sequentially
        prev = None
        for t in range(T):
            if not solvable[t]:
                continue
            q0 = Q[t] if outer > 0 or prev is None else prev
            idx = np.nonzero(obs_mask[t])[0]
            Q[t], _ = _solve_pose(cur, q0, markers[t], idx, cfg)
            prev = Q[t]
        if interpolated:
            Q = _interpolate_poses(Q, solvable)

        # (b) global scale solve
        if cfg.fit_scales:
            scales, Q = _scale_round(skel, Q, markers, obs_mask, solvable,
                                     scales, cfg)
            cur = skel.with_scales(scales)
            if interpolated:
                Q = _interpolate_poses(Q, solvable)

        new_rms, per_frame = _marker_errors(cur, Q, markers, obs_mask)
        rms_history.append(new_rms)
        if not new_rms <= rms + 1e-12:
            raise FitError("marker RMS increased across an outer round")
        improved = rms - new_rms
        rms = new_rms
        if improved < cfg.rms_tol:
            break

    _, per_frame = _marker_errors(cur, Q, markers, obs_mask)
    result = KinematicFit(PoseSeries(trial.dt, Q), scales, rms, per_frame,
                          interpolated, rms_history)
    if rms > cfg.fail_rms:
        raise FitError(
            f"marker RMS {rms:.3f} m exceeds {cfg.fail_rms} m", best=result)
    return result


def _refined_rms(skel, scales, Q, markers, obs_mask, solvable, cfg,
                 iters=8):
    """Marker RMS after a warm-started pose refinement under new scales."""
    cur = skel.with_scales(scales)
    pose_cfg = KinConfig(max_pose_iters=iters, lambda_init=cfg.lambda_init)
    Q_new = Q.copy()
    for t in range(Q.shape[0]):
        if not solvable[t]:
            continue
        idx = np.nonzero(obs_mask[t])[0]
        Q_new[t], _ = _solve_pose(cur, Q[t], markers[t], idx, pose_cfg)
    rms, _ = _marker_errors(cur, Q_new, markers, obs_mask)
    return rms, Q_new


def _scale_round(skel, Q, markers, obs_mask, solvable, scales,
                 cfg: KinConfig):
    """One Gauss-Newton step on bone scales over all frames' residuals.

    The per-frame pose subspace is projected out of the residual and
    scale Jacobian (variable projection), so the step targets the reduced
    objective min_q of the marker error; candidate steps are scored after a
    warm-started pose refinement and only accepted if the RMS improves.
    Bounds are enforced by clipping.
    """
    lo, hi = cfg.scale_bounds
    T = Q.shape[0]
    n = scales.size
    cur = skel.with_scales(scales)
    state = sk.kin_state(cur, Q)
    vm = sk.virtual_markers(cur, Q, state=state)      # (T, M, 3)
    Jq_full = sk.marker_jacobian(cur, state)          # (T, 3M, N)
    res0 = (vm - np.nan_to_num(markers)).reshape(T, -1)

    # scale Jacobian by forward differences, batched over all frames
    flat = scales.ravel()
    Js_full = np.empty((T, res0.shape[1], n))
    for k in range(n):
        pert = flat.copy()
        pert[k] += cfg.scale_fd_step
        vm_k = sk.virtual_markers(skel.with_scales(pert.reshape(scales.shape)),
                                  Q)
        Js_full[:, :, k] = ((vm_k - vm) / cfg.scale_fd_step).reshape(T, -1)

    H = np.zeros((n, n))
    g = np.zeros(n)
    eps = 1e-9
    for t in range(T):
        idx = np.nonzero(obs_mask[t])[0]
        if len(idx) == 0:
            continue
        rows = np.concatenate([np.arange(3 * k, 3 * k + 3) for k in idx])
        Jq = Jq_full[t][rows]
        Js = Js_full[t][rows]
        r = res0[t][rows]
        # project out what a pose adjustment can absorb
        A = Jq.T @ Jq + eps * np.eye(Jq.shape[1])
        PJs = Js - Jq @ np.linalg.solve(A, Jq.T @ Js)
        Pr = r - Jq @ np.linalg.solve(A, Jq.T @ r)
        H += Js.T @ PJs
        g += Js.T @ Pr

    rms0, _ = _marker_errors(cur, Q, markers, obs_mask)
    lam = cfg.lambda_init * max(np.trace(H) / n, 1e-12)
    for _ in range(cfg.max_scale_iters):
        try:
            ds = np.linalg.solve(H + lam * np.eye(n), -g)
        except np.linalg.LinAlgError:
            lam *= 10.0
            continue
        s_new = np.clip(flat + ds, lo, hi).reshape(scales.shape)
        rms_new, Q_new = _refined_rms(skel, s_new, Q, markers, obs_mask,
                                      solvable, cfg)
        if rms_new < rms0:
            return s_new, Q_new
        lam *= 10.0
    return scales, Q


def pose_derivatives(poses: PoseSeries, cutoff_hz: float = 30.0,
                     order: int = 3, prefilter=None):
    """First and second pose derivatives: central differences followed by a
    zero-phase Butterworth low-pass (default 30 Hz, order 3).

    ``prefilter`` is an optional sequence of (cutoff_hz, order) stages
    applied to the poses before differencing; noisy marker data needs it
    because double differencing amplifies white noise by sqrt(6)/dt^2.
    Fills and returns (qd, qdd) on the series.
    """
    if isinstance(poses, KinematicFit):
        poses = poses.poses
    if poses.length < 3:
        raise InputError("need at least 3 frames for derivatives")
    q = poses.q
    if prefilter:
        q = filter_cascade(q, poses.dt, prefilter)
    qd = butterworth_lowpass(central_difference1(TimeSeries(poses.dt, q)),
                             cutoff_hz, order).samples
    qdd = butterworth_lowpass(central_difference2(TimeSeries(poses.dt, q)),
                              cutoff_hz, order).samples
    poses.qd, poses.qdd = qd, qdd
    return qd, qdd
