"""Inverse dynamics, residual forces, and the joint non-convex refinement.

The residual force is the first six entries of the inverse-dynamics torque
vector at the root free joint (rotational then translational, following the
skeleton's DOF order): nonzero values represent physically impossible
actuation of the floating base.  ``full_fit`` refines poses, bone scales,
and a total-mass factor by block-coordinate descent, with the dynamics loss
applied only on frames whose external forces were observed.

Reported residual metrics smooth the residual series with the same filter
cascade used for accelerations ("consistent smoothing"): comparing a
twice-differentiated, low-passed acceleration against raw force-plate noise
would inflate the metric with energy the pipeline never used.
"""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import skeleton as sk
from .comfit import UnobservedSet
from .errors import ConvergenceWarning, InputError, ParseError
from .kinefit import PoseSeries, pose_derivatives
from .signals import butterworth_lowpass, TimeSeries
from .synthgen import PIPELINE_CUTOFF, PIPELINE_ORDER, PIPELINE_PREFILTER

HICKS_LINEAR_BW = 0.05
HICKS_ANGULAR_BWH = 0.1


@dataclass
class DynConfig:
    w_dyn: float = 1e-3             # m per N: weight of the dynamics loss
    max_outer: int = 10
    obj_tol: float = 1e-5           # relative objective improvement
    fd_step: float = 1e-6           # relative, central differences
    lambda_init: float = 1e-3
    mass_bounds: float = 0.3        # total mass within +-30% of nominal
    scale_bounds: tuple = (0.5, 2.0)
    fit_poses: bool = True
    fit_scales: bool = True
    fit_mass: bool = True
    prefilter: tuple = PIPELINE_PREFILTER
    cutoff_hz: float = PIPELINE_CUTOFF
    order: int = PIPELINE_ORDER
    residual_filter: bool = True


@dataclass
class QualityReport:
    marker_rms_cm: float
    linear_residual_BW: float
    angular_residual_BWh: float
    passes_hicks: bool


@dataclass
class DynamicsFit:
    poses: PoseSeries               # with pipeline qd / qdd filled
    scales: np.ndarray
    mass_scale: float
    total_mass: float
    skeleton: sk.Skeleton           # scaled + mass-adjusted model
    tau: np.ndarray                 # (T, N), root entries zeroed
    residual_angular: np.ndarray    # (T, 3) = raw tau[:, 0:3]
    residual_linear: np.ndarray     # (T, 3) = raw tau[:, 3:6]
    marker_rms: float               # m
    dyn_frames: np.ndarray          # (T,) bool: frames carrying dynamics loss
    objective_history: list = field(default_factory=list)
    config: DynConfig = field(default_factory=DynConfig)
    quality: QualityReport | None = None


def inverse_dynamics(skeleton: sk.Skeleton, q, qd, qdd, wrenches):
    """Joint torques and root residual for one state or a (T, ...) batch.

    Returns (tau, residual): residual is the raw first six torque entries
    (root rotations then root translations); those entries are zeroed in
    the returned tau.
    """
    tau = sk.generalized_forces(skeleton, q, qd, qdd, wrenches=wrenches)
    single = tau.ndim == 1
    tau = np.atleast_2d(tau)
    residual = tau[:, :6].copy()
    tau = tau.copy()
    tau[:, :6] = 0.0
    if single:
        return tau[0], residual[0]
    return tau, residual


# ---------------------------------------------------------------------------
# objective evaluation

class _Eval:
    """Objective and intermediates for one (Q, scales, mass) candidate."""

    def __init__(self, base_skel, trial, Q, scales, mass_scale, dyn_mask,
                 cfg: DynConfig, markers, obs_entries):
        self.skel = base_skel.with_scales(scales).with_mass_scale(mass_scale)
        self.Q = Q
        poses = PoseSeries(trial.dt, Q)
        self.qd, self.qdd = pose_derivatives(
            poses, cfg.cutoff_hz, cfg.order, prefilter=cfg.prefilter)
        self.poses = poses
        st = sk.kin_state(self.skel, Q, self.qd)
        self.state = st
        self.vm = sk.virtual_markers(self.skel, Q, state=st)
        self.tau_full = sk.generalized_forces(
            self.skel, Q, self.qd, self.qdd,
            wrenches=trial.wrench_array(), state=st)
        self.resid6 = self.tau_full[:, :6]
        dm = (self.vm - np.nan_to_num(markers)).reshape(Q.shape[0], -1)
        self.marker_sq = np.sum((dm * obs_entries) ** 2, axis=1)
        self.dyn_sq = np.where(dyn_mask,
                               np.sum((cfg.w_dyn * self.resid6) ** 2, axis=1),
                               0.0)
        self.objective = float(self.marker_sq.sum() + self.dyn_sq.sum())


def _obs_entries(markers):
    """(T, 3M) 0/1 mask of observed marker coordinates."""
    T, M, _ = markers.shape
    return (~np.isnan(markers)).astype(float).reshape(T, -1)


def _fd_dyn_jacobian(skel, Q, qd, qdd, wrenches, cfg):
    """(T, 6, N) central-difference Jacobian of the root residual w.r.t. the
    same-frame pose, holding the differentiated qd / qdd frozen."""
    T, N = Q.shape
    J = np.empty((T, 6, N))
    for k in range(N):
        h = cfg.fd_step * max(1.0, float(np.max(np.abs(Q[:, k]))))
        Qp = Q.copy()
        Qp[:, k] += h
        tp = sk.generalized_forces(skel, Qp, qd, qdd, wrenches=wrenches)
        Qp[:, k] -= 2 * h
        tm = sk.generalized_forces(skel, Qp, qd, qdd, wrenches=wrenches)
        J[:, :, k] = (tp[:, :6] - tm[:, :6]) / (2 * h)
    return J


def _pose_block(base_skel, trial, ev: _Eval, scales, mass_scale, dyn_mask,
                cfg, markers, obs_entries):
    """One damped Gauss-Newton step per frame (vectorized accept/reject)."""
    skel = ev.skel
    Q = ev.Q
    T, N = Q.shape
    wrenches = trial.wrench_array()
    Jm = sk.marker_jacobian(skel, ev.state)            # (T, 3M, N)
    Jm = Jm * obs_entries[:, :, None]
    rm = (ev.vm.reshape(T, -1)
          - np.nan_to_num(markers).reshape(T, -1)) * obs_entries
    Jd = _fd_dyn_jacobian(skel, Q, ev.qd, ev.qdd, wrenches, cfg)
    rd = cfg.w_dyn * ev.resid6
    Jd = cfg.w_dyn * Jd
    Jd[~dyn_mask] = 0.0
    rd = np.where(dyn_mask[:, None], rd, 0.0)

    JtJ = (np.einsum("tik,til->tkl", Jm, Jm)
           + np.einsum("tik,til->tkl", Jd, Jd))
    g = (np.einsum("tik,ti->tk", Jm, rm)
         + np.einsum("tik,ti->tk", Jd, rd))
    local0 = np.sum(rm ** 2, axis=1) + np.sum(rd ** 2, axis=1)

    Q_out = Q.copy()
    lam = np.full(T, cfg.lambda_init)
    pending = np.ones(T, dtype=bool)
    for _ in range(6):
        if not pending.any():
            break
        idx = np.nonzero(pending)[0]
        A = JtJ[idx] + lam[idx, None, None] * np.eye(N)
        dq = -np.linalg.solve(A, g[idx][..., None])[..., 0]
        Q_cand = Q.copy()
        Q_cand[idx] = Q[idx] + dq
        # batched local cost under frozen derivatives
        st = sk.kin_state(skel, Q_cand, ev.qd)
        vm = sk.virtual_markers(skel, Q_cand, state=st)
        rm_c = (vm.reshape(T, -1)
                - np.nan_to_num(markers).reshape(T, -1)) * obs_entries
        tau_c = sk.generalized_forces(skel, Q_cand, ev.qd, ev.qdd,
                                      wrenches=wrenches, state=st)
        rd_c = np.where(dyn_mask[:, None], cfg.w_dyn * tau_c[:, :6], 0.0)
        local_c = np.sum(rm_c ** 2, axis=1) + np.sum(rd_c ** 2, axis=1)
        improved = idx[local_c[idx] < local0[idx]]
        Q_out[improved] = Q_cand[improved]
        pending[improved] = False
        lam[pending] *= 10.0
    return Q_out


def _param_step(objective_fn, x0, bounds, cfg, fd_scale=1.0):
    """Damped Gauss-Newton step on a small parameter vector via central FD
    of the full objective's residual surrogate (uses objective values)."""
    # numerical gradient + diagonal curvature estimate of the objective
    n = len(x0)
    f0 = objective_fn(x0)
    grad = np.empty(n)
    curv = np.empty(n)
    for k in range(n):
        h = cfg.fd_step ** 0.5 * max(1.0, abs(x0[k])) * fd_scale
        xp = x0.copy()
        xp[k] += h
        fp = objective_fn(xp)
        xp[k] -= 2 * h
        fm = objective_fn(xp)
        grad[k] = (fp - fm) / (2 * h)
        curv[k] = max((fp - 2 * f0 + fm) / h ** 2, 0.0)
    lam = cfg.lambda_init * max(curv.max(), 1e-12)
    x_best, f_best = x0, f0
    for _ in range(8):
        dx = -grad / (curv + lam)
        x_new = np.clip(x0 + dx, bounds[0], bounds[1])
        f_new = objective_fn(x_new)
        if f_new < f_best:
            x_best, f_best = x_new, f_new
            break
        lam *= 10.0
    return x_best, f_best


def full_fit(skeleton: sk.Skeleton, trial, init_poses: PoseSeries,
             scales: np.ndarray | None = None, mass_scale: float = 1.0,
             U: UnobservedSet | None = None,
             config: DynConfig | None = None) -> DynamicsFit:
    """Refine (poses, scales, total mass) against marker and dynamics losses.

    objective = sum_t ||marker residual_t||^2
              + sum_{t not in U} ||w_dyn * tau_t[0:6]||^2
    """
    cfg = config or DynConfig()
    if U is None:
        U = UnobservedSet.from_trial(trial)
    markers = trial.marker_array()
    if markers.shape[1] != len(skeleton.markers):
        raise InputError("trial marker count does not match skeleton")
    obs_entries = _obs_entries(markers)
    T = trial.length
    hidden = np.zeros(T, dtype=bool)
    for u in U.indices:
        hidden[u - 1] = True
    dyn_mask = ~hidden
    Q = init_poses.q.copy()
    scales = (np.ones((skeleton.n_bodies, 3)) if scales is None
              else np.asarray(scales, dtype=float).copy())
    mass_scale = float(mass_scale)
    mlo, mhi = 1.0 - cfg.mass_bounds, 1.0 + cfg.mass_bounds

    def make_eval(Qx, sx, mx):
        return _Eval(skeleton, trial, Qx, sx, mx, dyn_mask, cfg, markers,
                     obs_entries)

    ev = make_eval(Q, scales, mass_scale)
    history = [ev.objective]
    best = (Q, scales, mass_scale, ev)
    for _ in range(cfg.max_outer):
        obj_start = ev.objective
        if cfg.fit_poses:
            Q_new = _pose_block(skeleton, trial, ev, scales, mass_scale,
                                dyn_mask, cfg, markers, obs_entries)
            ev_new = make_eval(Q_new, scales, mass_scale)
            if ev_new.objective < ev.objective:
                Q, ev = Q_new, ev_new
        if cfg.fit_scales:
            def scale_obj(flat):
                return make_eval(Q, flat.reshape(scales.shape),
                                 mass_scale).objective
            flat, _ = _param_step(scale_obj, scales.ravel().copy(),
                                  cfg.scale_bounds, cfg)
            ev_new = make_eval(Q, flat.reshape(scales.shape), mass_scale)
            if ev_new.objective < ev.objective:
                scales, ev = flat.reshape(scales.shape), ev_new
        if cfg.fit_mass:
            def mass_obj(x):
                return make_eval(Q, scales, float(x[0])).objective
            x, _ = _param_step(mass_obj, np.array([mass_scale]), (mlo, mhi),
                               cfg)
            ev_new = make_eval(Q, scales, float(x[0]))
            if ev_new.objective < ev.objective:
                mass_scale, ev = float(x[0]), ev_new

        history.append(ev.objective)
        if ev.objective < best[3].objective:
            best = (Q, scales, mass_scale, ev)
        if ev.objective > obj_start + 1e-12:
            warnings.warn("objective increased; returning best iterate",
                          ConvergenceWarning)
            Q, scales, mass_scale, ev = best
            break
        if obj_start - ev.objective < cfg.obj_tol * max(obj_start, 1e-12):
            break

    tau, resid = inverse_dynamics(ev.skel, Q, ev.qd, ev.qdd,
                                  trial.wrench_array())
    counts = obs_entries.sum()
    dm = (ev.vm.reshape(T, -1)
          - np.nan_to_num(markers).reshape(T, -1)) * obs_entries
    marker_rms = float(np.sqrt(np.sum(dm ** 2) / counts)) if counts else 0.0
    poses = PoseSeries(trial.dt, Q, ev.qd, ev.qdd)
    fit = DynamicsFit(poses, scales, mass_scale, ev.skel.total_mass, ev.skel,
                      tau, resid[:, 0:3], resid[:, 3:6], marker_rms,
                      dyn_mask, history, cfg)
    fit.quality = quality_report(fit, trial.meta)
    return fit


def fit_trial(skeleton: sk.Skeleton, trial, kin_config=None,
              dyn_config: DynConfig | None = None, alpha: float = 1e-3,
              U: UnobservedSet | None = None, kin_fit=None):
    """End-to-end reconstruction: marker fit, linear CoM initialization,
    root-translation adjustment, then the non-convex refinement.

    Returns (DynamicsFit, ComSolution, KinematicFit).  ``kin_fit`` lets
    callers reuse a marker fit shared across pipelines.
    """
    from .comfit import adjust_root_translation, solve_com
    from .kinefit import fit_kinematics
    cfg = dyn_config or DynConfig()
    if kin_fit is None:
        kin_fit = fit_kinematics(skeleton, trial, kin_config)
    if U is None:
        U = UnobservedSet.from_trial(trial)
    scaled = skeleton.with_scales(kin_fit.scales)
    com = sk.center_of_mass(scaled, kin_fit.poses.q)
    sol = solve_com(trial, com, U, alpha)
    poses = adjust_root_translation(scaled, kin_fit.poses, sol)
    mlo, mhi = 1.0 - cfg.mass_bounds, 1.0 + cfg.mass_bounds
    mass_scale = float(np.clip(sol.mass / scaled.total_mass, mlo, mhi))
    fit = full_fit(skeleton, trial, poses, scales=kin_fit.scales,
                   mass_scale=mass_scale, U=U, config=cfg)
    return fit, sol, kin_fit


# ---------------------------------------------------------------------------
# quality metrics

def filter_residual_series(resid: np.ndarray, dt: float, mask: np.ndarray,
                           cfg: DynConfig | None = None) -> np.ndarray:
    """Zero-phase smooth each maximal contiguous masked run of a residual
    series with the standard cascade; runs too short to filter pass through."""
    cfg = cfg or DynConfig()
    stages = tuple(cfg.prefilter) + ((cfg.cutoff_hz, cfg.order),)
    out = resid.copy()
    T = resid.shape[0]
    t = 0
    while t < T:
        if not mask[t]:
            t += 1
            continue
        e = t
        while e < T and mask[e]:
            e += 1
        seg = resid[t:e]
        for cutoff, order in stages:
            if seg.shape[0] > 3 * order and cutoff < 0.5 / dt:
                seg = butterworth_lowpass(TimeSeries(dt, seg), cutoff,
                                          order).samples
        out[t:e] = seg
        t = e
    return out


def quality_report(fit: DynamicsFit, meta) -> QualityReport:
    """Marker error plus Hicks-style normalized residuals over the frames
    that carried a dynamics loss."""
    bw = meta.mass * 9.81
    mask = fit.dyn_frames
    lin = fit.residual_linear
    ang = fit.residual_angular
    if fit.config.residual_filter:
        lin = filter_residual_series(lin, fit.poses.dt, mask, fit.config)
        ang = filter_residual_series(ang, fit.poses.dt, mask, fit.config)
    if mask.any():
        lin_bw = float(np.sqrt(np.mean(
            np.sum(lin[mask] ** 2, axis=1)))) / bw
        ang_bwh = float(np.sqrt(np.mean(
            np.sum(ang[mask] ** 2, axis=1)))) / (bw * meta.height)
    else:
        lin_bw = ang_bwh = 0.0
    return QualityReport(
        marker_rms_cm=fit.marker_rms * 100.0,
        linear_residual_BW=lin_bw,
        angular_residual_BWh=ang_bwh,
        passes_hicks=(lin_bw <= HICKS_LINEAR_BW
                      and ang_bwh <= HICKS_ANGULAR_BWH))


# ---------------------------------------------------------------------------
# fit result files

FIT_HEADER = "dynfit v1"


def save_fit(fit: DynamicsFit, path) -> None:
    q = fit.poses.q
    T, N = q.shape
    buf = io.StringIO()
    buf.write(FIT_HEADER + "\n")
    buf.write(f"dt {repr(float(fit.poses.dt))}\n")
    buf.write(f"dofs {N}\n")
    buf.write(f"mass_scale {repr(float(fit.mass_scale))}\n")
    buf.write(f"total_mass {repr(float(fit.total_mass))}\n")
    buf.write(f"marker_rms {repr(float(fit.marker_rms))}\n")
    buf.write("scales " + ",".join(repr(float(v))
                                   for v in fit.scales.ravel()) + "\n")
    buf.write("data\n")
    for t in range(T):
        row = np.concatenate([q[t], fit.tau[t], fit.residual_angular[t],
                              fit.residual_linear[t],
                              [1.0 if fit.dyn_frames[t] else 0.0]])
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def load_fit(path) -> DynamicsFit:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != FIT_HEADER:
        raise ParseError(f"expected header {FIT_HEADER!r}", line=1)
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
        mass_scale = float(header["mass_scale"])
        total_mass = float(header["total_mass"])
        marker_rms = float(header["marker_rms"])
        scales = np.array([float(v) for v in header["scales"].split(",")])
        scales = scales.reshape(-1, 3)
    except (KeyError, ValueError) as exc:
        raise ParseError(f"bad header: {exc}") from exc
    rows = []
    want = 2 * N + 7
    for i, line in enumerate(lines[data_start:]):
        vals = line.split(",")
        if len(vals) != want:
            raise ParseError(f"row has {len(vals)} values, expected {want}",
                             line=data_start + 1 + i)
        rows.append([float(v) for v in vals])
    arr = np.array(rows)
    q = arr[:, :N]
    tau = arr[:, N:2 * N]
    ang = arr[:, 2 * N:2 * N + 3]
    lin = arr[:, 2 * N + 3:2 * N + 6]
    dyn = arr[:, 2 * N + 6] > 0.5
    return DynamicsFit(PoseSeries(dt, q), scales, mass_scale, total_mass,
                       None, tau, ang, lin, marker_rms, dyn)
