import numpy as np
import pytest

from mocapdyn import skeleton as sk
from mocapdyn.errors import FitError, InputError
from mocapdyn.kinefit import (KinConfig, PoseSeries, fit_kinematics,
                              pose_derivatives)
from mocapdyn.trial_io import SubjectMeta, trial_from_arrays


def smooth_poses(skel, T=60, dt=0.01, seed=0):
    """Band-limited sinusoidal pose trajectory keeping angles small."""
    rng = np.random.default_rng(seed)
    t = np.arange(T) * dt
    Q = np.zeros((T, skel.dof_count))
    for k in range(skel.dof_count):
        amp = 0.25 if k not in (3, 4, 5) else 0.1
        f = rng.uniform(0.3, 1.5)
        Q[:, k] = amp * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    Q[:, 4] += 1.0  # keep the root up in the air
    return Q


def marker_trial(skel, Q, dt=0.01, noise=0.0, seed=1, occlude_frames=()):
    rng = np.random.default_rng(seed)
    markers = sk.virtual_markers(skel, Q).copy()
    if noise:
        markers += rng.normal(0.0, noise, markers.shape)
    for t in occlude_frames:
        markers[t] = np.nan
    T = Q.shape[0]
    nc = max(1, len(skel.contact_bodies))
    return trial_from_arrays("S01", skel.name, dt, markers,
                             np.zeros((T, nc, 6)), SubjectMeta(70.0, 1.75),
                             marker_names=[m.name for m in skel.markers])


def test_noiseless_recovery(biped):
    Q = smooth_poses(biped, T=30)
    trial = marker_trial(biped, Q)
    fit = fit_kinematics(biped, trial)
    assert fit.marker_rms < 1e-6
    assert np.sqrt(np.mean((fit.poses.q - Q) ** 2)) < 1e-6
    assert np.all(np.abs(fit.scales - 1.0) < 1e-4)


def test_noiseless_recovery_with_scaled_truth(biped):
    # uniform per-body stretching of the legs; a zero-residual optimum exists
    scales = np.ones((biped.n_bodies, 3))
    scales[1:3] = 1.12   # left thigh, shank
    scales[4:6] = 0.93   # right thigh, shank
    scaled = biped.with_scales(scales)
    Q = smooth_poses(biped, T=30, seed=3)
    trial = marker_trial(scaled, Q)
    fit = fit_kinematics(biped, trial, KinConfig(max_outer=6))
    assert fit.marker_rms < 1e-4


def test_noisy_rms_matches_noise_floor(biped):
    Q = smooth_poses(biped, T=200, seed=5)
    trial = marker_trial(biped, Q, noise=5e-3, seed=6)
    fit = fit_kinematics(biped, trial)
    assert 3e-3 < fit.marker_rms < 8e-3


def test_rms_history_monotone(biped):
    Q = smooth_poses(biped, T=40, seed=7)
    trial = marker_trial(biped, Q, noise=3e-3)
    fit = fit_kinematics(biped, trial, KinConfig(max_outer=3, rms_tol=0.0))
    diffs = np.diff(fit.rms_history)
    assert np.all(diffs <= 1e-12)


def test_occluded_frame_interpolated_and_flagged(biped):
    Q = smooth_poses(biped, T=30, seed=8)
    trial = marker_trial(biped, Q, occlude_frames=[12])
    fit = fit_kinematics(biped, trial)
    assert fit.interpolated_frames == [12]
    assert np.isnan(fit.per_frame_marker_error[12])
    # interpolated pose lies between its neighbors
    q = fit.poses.q
    assert np.allclose(q[12], 0.5 * (q[11] + q[13]), atol=1e-3)


def test_equivariance_under_world_rotation(biped):
    Q = smooth_poses(biped, T=25, seed=9)
    trial = marker_trial(biped, Q)
    fit = fit_kinematics(biped, trial, KinConfig(fit_scales=False))

    ang = 0.6
    R = np.array([[np.cos(ang), -np.sin(ang), 0],
                  [np.sin(ang), np.cos(ang), 0],
                  [0, 0, 1.0]])
    rotated = marker_trial(biped, Q)
    markers = rotated.marker_array() @ R.T
    trial_rot = trial_from_arrays("S01", biped.name, 0.01, markers,
                                  np.zeros((25, 2, 6)),
                                  SubjectMeta(70.0, 1.75),
                                  marker_names=[m.name for m in biped.markers])
    fit_rot = fit_kinematics(biped, trial_rot, KinConfig(fit_scales=False))
    assert abs(fit_rot.marker_rms - fit.marker_rms) < 1e-9

    fk = sk.forward_kinematics(biped, fit.poses.q)
    fk_rot = sk.forward_kinematics(biped, fit_rot.poses.q)
    assert np.allclose(fk_rot[:, 0, :3, :3], R @ fk[:, 0, :3, :3], atol=1e-6)
    assert np.allclose(fk_rot[:, 0, :3, 3],
                       fk[:, 0, :3, 3] @ R.T, atol=1e-6)


def test_warm_start_converges_in_20_iterations(biped):
    Q = smooth_poses(biped, T=50, seed=10)
    trial = marker_trial(biped, Q)
    cfg = KinConfig(fit_scales=False, max_outer=1, max_pose_iters=20)
    fit = fit_kinematics(biped, trial, cfg)
    assert np.nanmax(fit.per_frame_marker_error) < 1e-8


def test_too_few_markers_rejected(biped):
    Q = smooth_poses(biped, T=10)
    markers = sk.virtual_markers(biped, Q)
    markers[:, 3:] = np.nan  # 3 observed markers everywhere
    trial = trial_from_arrays("S01", biped.name, 0.01, markers,
                              np.zeros((10, 2, 6)), SubjectMeta(70.0, 1.75),
                              marker_names=[m.name for m in biped.markers])
    with pytest.raises(InputError):
        fit_kinematics(biped, trial)


def test_unfittable_markers_raise_with_best_iterate(biped):
    rng = np.random.default_rng(11)
    markers = rng.uniform(-5, 5, (15, len(biped.markers), 3))
    trial = trial_from_arrays("S01", biped.name, 0.01, markers,
                              np.zeros((15, 2, 6)), SubjectMeta(70.0, 1.75),
                              marker_names=[m.name for m in biped.markers])
    with pytest.raises(FitError) as exc:
        fit_kinematics(biped, trial)
    assert exc.value.best is not None
    assert exc.value.best.marker_rms > 0.2


# ---------------------------------------------------------------------------
# pose derivatives

def test_derivatives_of_linear_ramp_vanish():
    T = 100
    q = np.outer(np.arange(T) * 0.01, [2.0, -1.0])
    qd, qdd = pose_derivatives(PoseSeries(0.01, q))
    assert np.max(np.abs(qdd)) < 1e-6 * 2.0
    assert np.allclose(qd[5:-5], [2.0, -1.0], atol=1e-9)


def test_derivatives_of_slow_sinusoid():
    fs = 100.0
    t = np.arange(300) / fs
    w = 2 * np.pi * 1.0
    q = np.sin(w * t)[:, None]
    _, qdd = pose_derivatives(PoseSeries(1 / fs, q))
    core = slice(25, -25)
    err = np.sqrt(np.mean((qdd[core, 0] + w ** 2 * q[core, 0]) ** 2))
    assert err / np.sqrt(np.mean((w ** 2 * q[core, 0]) ** 2)) < 0.01


def test_filtering_suppresses_noise_acceleration():
    rng = np.random.default_rng(12)
    T = 2000
    dt = 0.002  # white pose noise mostly lives above the 30 Hz cutoff
    q = rng.normal(0.0, 1e-3, (T, 1))
    series = PoseSeries(dt, q)
    _, qdd = pose_derivatives(series)
    raw = (q[:-2] - 2 * q[1:-1] + q[2:]) / dt ** 2
    assert (np.sqrt(np.mean(qdd ** 2))
            < 0.05 * np.sqrt(np.mean(raw ** 2)))


def test_prefilter_reduces_acceleration_noise_further():
    rng = np.random.default_rng(13)
    t = np.arange(400) * 0.01
    q = np.sin(2 * np.pi * 1.0 * t)[:, None] + rng.normal(0, 5e-3, (400, 1))
    _, qdd_plain = pose_derivatives(PoseSeries(0.01, q))
    _, qdd_pre = pose_derivatives(PoseSeries(0.01, q), prefilter=[(10.0, 3)])
    w2 = (2 * np.pi) ** 2
    true_qdd = -w2 * np.sin(2 * np.pi * 1.0 * t)
    core = slice(40, -40)
    err_plain = np.sqrt(np.mean((qdd_plain[core, 0] - true_qdd[core]) ** 2))
    err_pre = np.sqrt(np.mean((qdd_pre[core, 0] - true_qdd[core]) ** 2))
    assert err_pre < 0.5 * err_plain


def test_derivatives_too_short():
    with pytest.raises(InputError):
        pose_derivatives(PoseSeries(0.01, np.zeros((2, 3))))
