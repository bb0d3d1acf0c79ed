"""Linear least-squares initialization of the center-of-mass trajectory.

Given per-frame total external forces (possibly missing on a set U of
frames) and a kinematic CoM trajectory Z, the CoM path under semi-explicit
Euler integration is a *linear* function of the unknowns

    zeta = [z_1, zdot_1, mu, zdd_{u_1}, zdd_{u_2}, ...]

where mu is the inverse of total mass and zdd_u are the total CoM
accelerations on force-unobserved frames.  Observed frames contribute
zdd_k = mu * f_k + g.  Solving ||A zeta - (Z - b)|| in one shot recovers
initial state, inverse mass, and the missing accelerations; the root
translation is then shifted so the kinematic CoM matches the fit.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import skeleton as sk
from .errors import ConvergenceWarning, InputError, RankDeficientError
from .kinefit import PoseSeries

GRAVITY_VEC = np.array([0.0, -9.81, 0.0])
MU_MIN = 1.0 / 200.0   # inverse of the heaviest plausible subject (kg^-1)
MU_MAX = 1.0 / 20.0
DEFAULT_ALPHA = 1e-3


@dataclass
class UnobservedSet:
    """Sorted 1-based indices of frames whose external forces are hidden."""

    indices: list

    def __post_init__(self):
        idx = sorted(int(i) for i in self.indices)
        if len(set(idx)) != len(idx):
            raise InputError("duplicate unobserved frame indices")
        if idx and idx[0] < 1:
            raise InputError("unobserved frame indices are 1-based")
        self.indices = idx

    @classmethod
    def from_trial(cls, trial) -> "UnobservedSet":
        return cls(list(trial.unobserved_frames()))

    def __len__(self):
        return len(self.indices)

    def __contains__(self, i):
        return i in set(self.indices)


@dataclass
class ComSolution:
    z1: np.ndarray
    zdot1: np.ndarray
    mu: float
    acc_U: dict                     # 1-based frame index -> 3-vector (m/s^2)
    fitted_traj: np.ndarray         # (T, 3)
    alpha: float
    U: UnobservedSet = field(default_factory=lambda: UnobservedSet([]))
    mu_clamped: bool = False

    @property
    def mass(self) -> float:
        return 1.0 / self.mu


def _total_forces(trial) -> np.ndarray:
    """(T, 3) sum of contact forces per frame (force part of each wrench)."""
    return trial.wrench_array()[:, :, 3:6].sum(axis=1)


def _check_inputs(trial, U: UnobservedSet):
    T = trial.length
    if T < 2:
        raise InputError("need at least 2 frames")
    if U.indices and U.indices[-1] > T:
        raise InputError("unobserved frame index beyond trial length")
    n_unknowns = 7 + 3 * len(U)
    if 3 * T < n_unknowns:
        raise InputError(
            f"underdetermined: {n_unknowns} unknowns but only {3 * T} "
            "trajectory equations")
    hidden = set(U.indices)
    observed = trial.observed_mask()
    for t in range(T):
        if (t + 1) not in hidden and not observed[t]:
            raise InputError(
                f"frame {t + 1} lacks force data but is not in U")


def build_linear_system(trial, U: UnobservedSet, alpha: float = DEFAULT_ALPHA,
                        dt: float | None = None, g_vec=GRAVITY_VEC):
    """Linear map (A, b) with rows 1..3T giving the integrated CoM position
    per frame and 3|U| regularization rows [0 | alpha*I] pulling the
    unobserved accelerations toward zero."""
    if dt is None:
        dt = trial.dt
    _check_inputs(trial, U)
    T = trial.length
    forces = _total_forces(trial)
    nu = len(U)
    ncols = 7 + 3 * nu
    A = np.zeros((3 * (T + nu), ncols))
    b = np.zeros(3 * (T + nu))
    u_col = {u: 7 + 3 * j for j, u in enumerate(U.indices)}
    hidden = set(U.indices)
    eye = np.eye(3)

    # z_t = z_1 + (t-1) dt zdot_1 + sum_{k<t} (t-k) dt^2 zdd_k   (1-based)
    for t in range(1, T + 1):
        r = slice(3 * (t - 1), 3 * t)
        A[r, 0:3] = eye
        A[r, 3:6] = (t - 1) * dt * eye
        for k in range(1, t):
            w = (t - k) * dt * dt
            if k in hidden:
                A[r, u_col[k]:u_col[k] + 3] += w * eye
            else:
                A[r, 6] += w * forces[k - 1]
                b[r] += w * g_vec
    for j in range(nu):
        r = slice(3 * (T + j), 3 * (T + j + 1))
        A[r, 7 + 3 * j:7 + 3 * j + 3] = alpha * eye
    return A, b


def integrate_com(z1, zdot1, accs, dt):
    """Brute-force semi-explicit Euler reference integrator.

    ``accs`` has one acceleration per frame; frame T's entry is unused.
    Returns the (T, 3) positions z_1..z_T.
    """
    accs = np.asarray(accs, dtype=float)
    T = accs.shape[0]
    out = np.empty((T, 3))
    z = np.asarray(z1, dtype=float).copy()
    zd = np.asarray(zdot1, dtype=float).copy()
    out[0] = z
    for k in range(T - 1):
        zd = zd + dt * accs[k]
        z = z + dt * zd
        out[k + 1] = z
    return out


def _frame_accelerations(forces, mu, acc_U, g_vec):
    accs = mu * forces + g_vec
    for u, a in acc_U.items():
        accs[u - 1] = a
    return accs


def solve_com(trial, kinematic_coms: np.ndarray,
              U: UnobservedSet | None = None, alpha: float = DEFAULT_ALPHA,
              dt: float | None = None, g_vec=GRAVITY_VEC,
              rank_rtol: float = 1e-10) -> ComSolution:
    """Least-squares fit of zeta = [z1, zdot1, mu, zdd_U...] to the
    kinematic CoM trajectory.

    Rank deficiency that leaves z1/zdot1 undetermined raises
    RankDeficientError naming the null directions; deficiency confined to
    mu or the unobserved accelerations (e.g. free flight, where f = 0
    makes the mu column vanish) falls back to the minimum-norm solution.
    mu is clamped to [1/200, 1/20] kg^-1 with a warning.
    """
    if dt is None:
        dt = trial.dt
    if U is None:
        U = UnobservedSet.from_trial(trial)
    Z = np.asarray(kinematic_coms, dtype=float)
    if Z.shape != (trial.length, 3):
        raise InputError("kinematic_coms must be (T, 3)")
    A, b = build_linear_system(trial, U, alpha, dt, g_vec)
    rhs = np.concatenate([Z.ravel(), np.zeros(3 * len(U))]) - b

    # equilibrate the columns before the rank check and solve: raw column
    # norms span many orders of magnitude (position rows grow like T^2),
    # which would make a relative singular-value threshold meaningless on
    # long trials
    col = np.linalg.norm(A, axis=0)
    col[col == 0.0] = 1.0
    As = A / col
    _, S, Vt = np.linalg.svd(As, full_matrices=False)
    tol = rank_rtol * S[0]
    null_rows = np.nonzero(S < tol)[0]
    if len(null_rows):
        labels = (["z1_x", "z1_y", "z1_z", "zdot1_x", "zdot1_y", "zdot1_z",
                   "mu"]
                  + [f"acc_u{u}_{ax}" for u in U.indices for ax in "xyz"])
        bad = []
        for i in null_rows:
            v = Vt[i]
            if np.linalg.norm(v[:6]) > 1e-6:
                involved = [labels[j] for j in np.nonzero(np.abs(v) > 1e-6)[0]]
                bad.append(involved)
        if bad:
            raise RankDeficientError(
                f"initial CoM state not identifiable; null directions: {bad}",
                null_directions=bad)

    zeta, *_ = np.linalg.lstsq(As, rhs, rcond=rank_rtol)
    zeta /= col
    mu = float(zeta[6])
    mu_clamped = False
    if not (MU_MIN <= mu <= MU_MAX):
        warnings.warn(
            f"solved inverse mass {mu:.4g} kg^-1 outside [{MU_MIN:.4g}, "
            f"{MU_MAX:.4g}]; clamping", ConvergenceWarning)
        mu = float(np.clip(mu, MU_MIN, MU_MAX))
        mu_clamped = True
    acc_U = {u: zeta[7 + 3 * j:10 + 3 * j].copy()
             for j, u in enumerate(U.indices)}
    accs = _frame_accelerations(_total_forces(trial), mu, acc_U, g_vec)
    fitted = integrate_com(zeta[0:3], zeta[3:6], accs, dt)
    return ComSolution(zeta[0:3].copy(), zeta[3:6].copy(), mu, acc_U, fitted,
                       alpha, U, mu_clamped)


def adjust_root_translation(skeleton: sk.Skeleton, poses: PoseSeries,
                            solution: ComSolution) -> PoseSeries:
    """Shift the root translation DOFs so the kinematic CoM tracks the
    fitted trajectory exactly (root translation moves the CoM one-to-one)."""
    q = poses.q.copy()
    com = sk.center_of_mass(skeleton, q)
    if com.shape != solution.fitted_traj.shape:
        raise InputError("pose series and CoM solution lengths differ")
    q[:, 3:6] += solution.fitted_traj - com
    return PoseSeries(poses.dt, q)


def export_system(A: np.ndarray, b: np.ndarray, path_prefix: str) -> None:
    """Diagnostic dump of the linear system as two MatrixMarket array files:
    <prefix>_A.mtx and <prefix>_b.mtx."""
    from scipy.io import mmwrite
    mmwrite(f"{path_prefix}_A.mtx", np.asarray(A),
            comment="CoM initialization system matrix A")
    mmwrite(f"{path_prefix}_b.mtx", np.asarray(b).reshape(-1, 1),
            comment="CoM initialization offset vector b")
