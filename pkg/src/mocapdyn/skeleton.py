"""Generic articulated rigid-body model.

A skeleton is a tree of bodies connected by free (6-DOF), revolute (1-DOF)
or translational (1-DOF) joints.  The free joint parameterizes orientation
with intrinsic XYZ Euler angles (gimbal lock at middle angle = +/- pi/2) and
translation in the parent frame; for the root body the parent frame is the
world, so the three translation coordinates move the whole model one-to-one.

All kinematics/dynamics entry points accept either a single pose ``(N,)`` or
a batch of poses ``(T, N)`` and are pure functions: a Skeleton is immutable
after construction and safe to share across threads.

Conventions:
  - generalized coordinates of a free joint: [rx, ry, rz, tx, ty, tz]
  - spatial wrenches are ordered (moment; force), moment first
  - bias forces C(q, qd) enter the equations of motion as M qdd = C + J^T f + tau
  - bone scales apply componentwise to marker offsets and body CoM offsets;
    a child joint's attachment offset scales with the *parent* body's scale;
    inertia rescales as diag(s) I diag(s)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

_EX = np.array([1.0, 0.0, 0.0])
_EY = np.array([0.0, 1.0, 0.0])
_EZ = np.array([0.0, 0.0, 1.0])

JOINT_KINDS = ("free", "revolute", "translational")


@dataclass(eq=False)
class Joint:
    """Connects ``bodies[parent]`` (or the world if parent < 0) to its child body.

    ``offset`` is the joint origin in the parent body frame, before parent
    scaling.  ``axis`` is required for 1-DOF joints (unit vector, local frame).
    """

    kind: str
    parent: int
    offset: np.ndarray
    axis: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in JOINT_KINDS:
            raise InputError(f"unknown joint kind {self.kind!r}")
        self.offset = np.asarray(self.offset, dtype=float).reshape(3)
        if self.kind != "free":
            if self.axis is None:
                raise InputError(f"{self.kind} joint needs an axis")
            self.axis = np.asarray(self.axis, dtype=float).reshape(3)
            n = np.linalg.norm(self.axis)
            if n == 0.0:
                raise InputError("joint axis must be nonzero")
            self.axis = self.axis / n

    @property
    def dof_count(self) -> int:
        return 6 if self.kind == "free" else 1


@dataclass(eq=False)
class Body:
    name: str
    mass: float
    inertia: np.ndarray
    com_offset: np.ndarray
    scale: np.ndarray = field(default_factory=lambda: np.ones(3))

    def __post_init__(self):
        self.inertia = np.asarray(self.inertia, dtype=float).reshape(3, 3)
        self.com_offset = np.asarray(self.com_offset, dtype=float).reshape(3)
        self.scale = np.asarray(self.scale, dtype=float).reshape(3)
        if not self.mass > 0:
            raise InputError(f"body {self.name!r}: mass must be > 0")
        if np.any(self.scale <= 0):
            raise InputError(f"body {self.name!r}: scale components must be > 0")
        if not np.allclose(self.inertia, self.inertia.T, atol=1e-12):
            raise InputError(f"body {self.name!r}: inertia must be symmetric")
        if np.min(np.linalg.eigvalsh(self.inertia)) <= 0:
            raise InputError(f"body {self.name!r}: inertia must be positive definite")


@dataclass(eq=False)
class MarkerDef:
    name: str
    body: int
    offset: np.ndarray

    def __post_init__(self):
        self.offset = np.asarray(self.offset, dtype=float).reshape(3)
        if not np.all(np.isfinite(self.offset)):
            raise InputError(f"marker {self.name!r}: offset must be finite")


@dataclass(eq=False)
class Pose:
    q: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float).reshape(-1)
        if not np.all(np.isfinite(self.q)):
            raise InputError("pose coordinates must be finite")


class Skeleton:
    """Immutable articulated rigid-body model."""

    def __init__(self, name, bodies, joints, gravity=(0.0, -9.81, 0.0),
                 contact_bodies=(), markers=(), subject_height=1.0,
                 subject_mass_nominal=None):
        self.name = name
        self.bodies = list(bodies)
        self.joints = list(joints)
        self.gravity = np.asarray(gravity, dtype=float).reshape(3)
        self.contact_bodies = list(contact_bodies)
        self.markers = list(markers)
        self.subject_height = float(subject_height)
        if subject_mass_nominal is None:
            subject_mass_nominal = sum(b.mass for b in self.bodies)
        self.subject_mass_nominal = float(subject_mass_nominal)
        self._validate()
        self._compile()

    # -- construction ------------------------------------------------------

    def _validate(self):
        nb = len(self.bodies)
        if len(self.joints) != nb:
            raise InputError("need exactly one joint per body")
        for i, j in enumerate(self.joints):
            if j.parent >= i:
                raise InputError(
                    f"joint {i}: parent index {j.parent} must be < child index")
            if j.parent < -1:
                raise InputError(f"joint {i}: bad parent index {j.parent}")
        for m in self.markers:
            if not (0 <= m.body < nb):
                raise InputError(f"marker {m.name!r}: bad body index {m.body}")
        for c in self.contact_bodies:
            if not (0 <= c < nb):
                raise InputError(f"bad contact body index {c}")

    def _compile(self):
        """Flatten joints into elementary 1-DOF transforms and ancestry masks."""
        nb = len(self.bodies)
        dof = 0
        elems = []  # per body: list of (kind 'r'/'p', local axis, q index)
        for i, j in enumerate(self.joints):
            if j.kind == "free":
                e = [("p", _EX, dof + 3), ("p", _EY, dof + 4), ("p", _EZ, dof + 5),
                     ("r", _EX, dof + 0), ("r", _EY, dof + 1), ("r", _EZ, dof + 2)]
                dof += 6
            elif j.kind == "revolute":
                e = [("r", j.axis, dof)]
                dof += 1
            else:
                e = [("p", j.axis, dof)]
                dof += 1
            elems.append(e)
        self._elems = elems
        self._n = dof

        self._dof_body = np.empty(dof, dtype=int)
        for b, e in enumerate(elems):
            for _, _, qi in e:
                self._dof_body[qi] = b

        anc = np.zeros((nb, nb), dtype=bool)  # anc[a, b]: a is ancestor-or-self of b
        for b in range(nb):
            a = b
            while a >= 0:
                anc[a, b] = True
                a = self.joints[a].parent
        self._ancestor = anc
        # affects[k, b]: DOF k moves body b
        self._affects = anc[self._dof_body, :]

    @property
    def dof_count(self) -> int:
        return self._n

    @property
    def n_bodies(self) -> int:
        return len(self.bodies)

    @property
    def total_mass(self) -> float:
        return float(sum(b.mass for b in self.bodies))

    def body_index(self, name: str) -> int:
        for i, b in enumerate(self.bodies):
            if b.name == name:
                return i
        raise InputError(f"no body named {name!r}")

    def with_scales(self, scales) -> "Skeleton":
        """New skeleton with per-body scales replaced. scales: (n_bodies, 3)."""
        scales = np.asarray(scales, dtype=float).reshape(len(self.bodies), 3)
        bodies = [replace_body_scale(b, s) for b, s in zip(self.bodies, scales)]
        return Skeleton(self.name, bodies, self.joints, self.gravity,
                        self.contact_bodies, self.markers, self.subject_height,
                        self.subject_mass_nominal)

    def with_mass_scale(self, factor: float) -> "Skeleton":
        """New skeleton with every body mass and inertia multiplied by ``factor``."""
        if not factor > 0:
            raise InputError("mass scale factor must be > 0")
        bodies = [Body(b.name, b.mass * factor, b.inertia * factor,
                       b.com_offset.copy(), b.scale.copy()) for b in self.bodies]
        return Skeleton(self.name, bodies, self.joints, self.gravity,
                        self.contact_bodies, self.markers, self.subject_height,
                        self.subject_mass_nominal)

    def scales(self) -> np.ndarray:
        return np.array([b.scale for b in self.bodies])


def replace_body_scale(body: Body, scale) -> Body:
    scale = np.asarray(scale, dtype=float).reshape(3)
    d = np.diag(scale)
    inertia = d @ body.inertia @ d
    return Body(body.name, body.mass, inertia, body.com_offset.copy(), scale)


# -- batched kinematics ----------------------------------------------------


def _axis_rotations(axis, theta):
    """Rodrigues rotation matrices for a fixed axis and angles (T,) -> (T, 3, 3)."""
    theta = np.asarray(theta, dtype=float)
    u = np.asarray(axis, dtype=float)
    K = np.array([[0.0, -u[2], u[1]], [u[2], 0.0, -u[0]], [-u[1], u[0], 0.0]])
    c = np.cos(theta)[..., None, None]
    s = np.sin(theta)[..., None, None]
    eye = np.eye(3)
    return c * eye + s * K + (1.0 - c[..., 0, 0])[..., None, None] * np.outer(u, u)


class KinState:
    """Cached result of one forward pass over a pose batch.

    All arrays carry a leading batch axis T.  Velocity-dependent members are
    only populated when a velocity was supplied.
    """

    def __init__(self, skel: Skeleton, Q: np.ndarray, Qd: np.ndarray | None):
        T, N = Q.shape
        if N != skel.dof_count:
            raise InputError(f"pose length {N} != dof count {skel.dof_count}")
        self.skel = skel
        self.T = T
        self.Q = Q
        self.Qd = Qd
        with_vel = Qd is not None

        nb = skel.n_bodies
        self.R = np.empty((nb, T, 3, 3))
        self.p = np.empty((nb, T, 3))
        self.dof_kind = np.empty(N, dtype="U1")
        self.dof_axis = np.empty((N, T, 3))
        self.dof_origin = np.zeros((N, T, 3))
        if with_vel:
            self.w = np.zeros((nb, T, 3))
            self.v = np.zeros((nb, T, 3))
            self.dw = np.zeros((nb, T, 3))   # angular acceleration with qdd = 0
            self.a = np.zeros((nb, T, 3))    # origin acceleration with qdd = 0

        for b in range(nb):
            joint = skel.joints[b]
            if joint.parent < 0:
                R = np.broadcast_to(np.eye(3), (T, 3, 3)).copy()
                p = np.broadcast_to(joint.offset, (T, 3)).copy()
                w = v = dw = a = None
                if with_vel:
                    w, v, dw, a = (np.zeros((T, 3)) for _ in range(4))
            else:
                pa = joint.parent
                R = self.R[pa].copy()
                d = skel.bodies[pa].scale * joint.offset
                delta = R @ d
                p = self.p[pa] + delta
                if with_vel:
                    w = self.w[pa].copy()
                    dw = self.dw[pa].copy()
                    v = self.v[pa] + np.cross(w, delta)
                    a = (self.a[pa] + np.cross(dw, delta)
                         + np.cross(w, np.cross(w, delta)))

            for kind, u, qi in skel._elems[b]:
                aw = R @ u
                self.dof_kind[qi] = kind
                self.dof_axis[qi] = aw
                if kind == "r":
                    self.dof_origin[qi] = p
                    if with_vel:
                        qd = Qd[:, qi, None]
                        dw = dw + np.cross(w, aw) * qd
                        w = w + aw * qd
                    R = R @ _axis_rotations(u, Q[:, qi])
                else:
                    qv = Q[:, qi, None]
                    if with_vel:
                        qd = Qd[:, qi, None]
                        adot = np.cross(w, aw)
                        addot = np.cross(dw, aw) + np.cross(w, adot)
                        a = a + addot * qv + 2.0 * adot * qd
                        v = v + adot * qv + aw * qd
                    p = p + aw * qv
            self.R[b] = R
            self.p[b] = p
            if with_vel:
                self.w[b], self.v[b], self.dw[b], self.a[b] = w, v, dw, a

    # -- derived quantities ------------------------------------------------

    def point_jacobian(self, body: int, points: np.ndarray) -> np.ndarray:
        """Jacobian (T, 3, N) of world points (T, 3) rigidly attached to ``body``."""
        T, N = self.T, self.skel.dof_count
        J = np.zeros((T, 3, N))
        for qi in np.nonzero(self.skel._affects[:, body])[0]:
            if self.dof_kind[qi] == "r":
                J[:, :, qi] = np.cross(self.dof_axis[qi], points - self.dof_origin[qi])
            else:
                J[:, :, qi] = self.dof_axis[qi]
        return J

    def angular_jacobian(self, body: int) -> np.ndarray:
        T, N = self.T, self.skel.dof_count
        J = np.zeros((T, 3, N))
        for qi in np.nonzero(self.skel._affects[:, body])[0]:
            if self.dof_kind[qi] == "r":
                J[:, :, qi] = self.dof_axis[qi]
        return J

    def body_com(self, b: int) -> np.ndarray:
        body = self.skel.bodies[b]
        return self.p[b] + self.R[b] @ (body.scale * body.com_offset)

    def body_com_bias_acc(self, b: int) -> np.ndarray:
        body = self.skel.bodies[b]
        r = self.R[b] @ (body.scale * body.com_offset)
        return (self.a[b] + np.cross(self.dw[b], r)
                + np.cross(self.w[b], np.cross(self.w[b], r)))

    def world_inertia(self, b: int) -> np.ndarray:
        body = self.skel.bodies[b]
        return self.R[b] @ body.inertia @ np.swapaxes(self.R[b], -1, -2)


def _as_batch(q):
    q = np.asarray(q, dtype=float)
    if q.ndim == 1:
        return q[None, :], True
    if q.ndim == 2:
        return q, False
    raise InputError(f"pose array must be 1- or 2-dimensional, got shape {q.shape}")


def kin_state(skeleton: Skeleton, q, qd=None) -> KinState:
    Q, _ = _as_batch(q)
    Qd = None
    if qd is not None:
        Qd, _ = _as_batch(qd)
        if Qd.shape != Q.shape:
            raise InputError("velocity shape must match pose shape")
    return KinState(skeleton, Q, Qd)


def forward_kinematics(skeleton: Skeleton, pose):
    """World transform of every body, as (..., n_bodies, 4, 4)."""
    Q, single = _as_batch(pose)
    st = KinState(skeleton, Q, None)
    nb = skeleton.n_bodies
    T = np.zeros((st.T, nb, 4, 4))
    T[:, :, 3, 3] = 1.0
    for b in range(nb):
        T[:, b, :3, :3] = st.R[b]
        T[:, b, :3, 3] = st.p[b]
    return T[0] if single else T


def virtual_markers(skeleton: Skeleton, pose, state: KinState | None = None):
    """World positions of all defined markers, (..., n_markers, 3)."""
    Q, single = _as_batch(pose)
    st = state if state is not None else KinState(skeleton, Q, None)
    out = np.empty((st.T, len(skeleton.markers), 3))
    for k, m in enumerate(skeleton.markers):
        body = skeleton.bodies[m.body]
        out[:, k] = st.p[m.body] + st.R[m.body] @ (body.scale * m.offset)
    return out[0] if single else out


def marker_jacobian(skeleton: Skeleton, state: KinState) -> np.ndarray:
    """Stacked marker Jacobian, (T, 3 * n_markers, N)."""
    nm = len(skeleton.markers)
    J = np.empty((state.T, 3 * nm, skeleton.dof_count))
    for k, m in enumerate(skeleton.markers):
        body = skeleton.bodies[m.body]
        pts = state.p[m.body] + state.R[m.body] @ (body.scale * m.offset)
        J[:, 3 * k:3 * k + 3, :] = state.point_jacobian(m.body, pts)
    return J


def center_of_mass(skeleton: Skeleton, pose, state: KinState | None = None):
    Q, single = _as_batch(pose)
    st = state if state is not None else KinState(skeleton, Q, None)
    total = skeleton.total_mass
    c = np.zeros((st.T, 3))
    for b, body in enumerate(skeleton.bodies):
        c += body.mass * st.body_com(b)
    c /= total
    return c[0] if single else c


def com_jacobian(skeleton: Skeleton, pose, state: KinState | None = None):
    Q, single = _as_batch(pose)
    st = state if state is not None else KinState(skeleton, Q, None)
    total = skeleton.total_mass
    J = np.zeros((st.T, 3, skeleton.dof_count))
    for b, body in enumerate(skeleton.bodies):
        J += body.mass * st.point_jacobian(b, st.body_com(b))
    J /= total
    return J[0] if single else J


def mass_matrix(skeleton: Skeleton, pose, state: KinState | None = None):
    """Joint-space mass matrix, accumulated body by body from CoM/angular Jacobians."""
    Q, single = _as_batch(pose)
    st = state if state is not None else KinState(skeleton, Q, None)
    N = skeleton.dof_count
    M = np.zeros((st.T, N, N))
    for b, body in enumerate(skeleton.bodies):
        Jv = st.point_jacobian(b, st.body_com(b))
        Jw = st.angular_jacobian(b)
        Iw = st.world_inertia(b)
        M += body.mass * np.einsum("tik,til->tkl", Jv, Jv)
        M += np.einsum("tik,tij,tjl->tkl", Jw, Iw, Jw)
    M = 0.5 * (M + np.swapaxes(M, -1, -2))
    return M[0] if single else M


def bias_forces(skeleton: Skeleton, pose, velocity, state: KinState | None = None):
    """Generalized gravity + velocity-product forces C(q, qd).

    Sign convention: M qdd = C + J^T f + tau, equivalently tau = M qdd - C - J^T f.
    """
    Q, single = _as_batch(pose)
    Qd, _ = _as_batch(velocity)
    if Qd.shape != Q.shape:
        raise InputError("velocity length must match pose length")
    st = state if state is not None else KinState(skeleton, Q, Qd)
    N = skeleton.dof_count
    g = skeleton.gravity
    C = np.zeros((st.T, N))
    for b, body in enumerate(skeleton.bodies):
        Jv = st.point_jacobian(b, st.body_com(b))
        Jw = st.angular_jacobian(b)
        Iw = st.world_inertia(b)
        fvec = body.mass * (g - st.body_com_bias_acc(b))
        Iww = np.einsum("tij,tj->ti", Iw, st.w[b])
        tvec = -(np.einsum("tij,tj->ti", Iw, st.dw[b]) + np.cross(st.w[b], Iww))
        C += np.einsum("tik,ti->tk", Jv, fvec) + np.einsum("tik,ti->tk", Jw, tvec)
    return C[0] if single else C


def contact_jacobian(skeleton: Skeleton, pose, contact_body,
                     state: KinState | None = None):
    """6 x N Jacobian mapping qd to the (angular; linear) velocity of the
    contact body origin in a world-aligned frame at that origin."""
    if contact_body not in skeleton.contact_bodies:
        raise InputError(f"body {contact_body} is not a declared contact body")
    Q, single = _as_batch(pose)
    st = state if state is not None else KinState(skeleton, Q, None)
    J = np.concatenate([st.angular_jacobian(contact_body),
                        st.point_jacobian(contact_body, st.p[contact_body])], axis=1)
    return J[0] if single else J


def com_acceleration(skeleton: Skeleton, pose, velocity, acceleration,
                     state: KinState | None = None):
    """CoM acceleration implied by (q, qd, qdd), (..., 3)."""
    Q, single = _as_batch(pose)
    Qd, _ = _as_batch(velocity)
    Qdd, _ = _as_batch(acceleration)
    st = state if state is not None else KinState(skeleton, Q, Qd)
    total = skeleton.total_mass
    acc = np.zeros((st.T, 3))
    for b, body in enumerate(skeleton.bodies):
        Jv = st.point_jacobian(b, st.body_com(b))
        acc += body.mass * (st.body_com_bias_acc(b)
                            + np.einsum("tik,tk->ti", Jv, Qdd))
    acc /= total
    return acc[0] if single else acc


def generalized_forces(skeleton: Skeleton, pose, velocity, acceleration,
                       wrenches=None, state: KinState | None = None):
    """Full inverse dynamics: tau = M qdd - C - sum_c Jc^T w_c, (..., N).

    ``wrenches``: (..., n_contacts, 6) world (moment; force) pairs applied at
    the contact body origins; None means no external wrenches.
    """
    Q, single = _as_batch(pose)
    Qd, _ = _as_batch(velocity)
    Qdd, _ = _as_batch(acceleration)
    st = state if state is not None else KinState(skeleton, Q, Qd)
    M = mass_matrix(skeleton, Q, state=st)
    C = bias_forces(skeleton, Q, Qd, state=st)
    tau = np.einsum("tkl,tl->tk", M, Qdd) - C
    if wrenches is not None:
        W = np.asarray(wrenches, dtype=float)
        if single and W.ndim == 2:
            W = W[None]
        if W.shape[1] != len(skeleton.contact_bodies) or W.shape[2] != 6:
            raise InputError("wrenches must have shape (..., n_contacts, 6)")
        for ci, cb in enumerate(skeleton.contact_bodies):
            Jc = contact_jacobian(skeleton, Q, cb, state=st)
            tau -= np.einsum("tik,ti->tk", Jc, W[:, ci])
    return tau[0] if single else tau


def forward_dynamics(skeleton: Skeleton, pose, velocity, tau, wrenches=None):
    """Solve M qdd = C + J^T f + tau for qdd."""
    Q, single = _as_batch(pose)
    Qd, _ = _as_batch(velocity)
    Tau, _ = _as_batch(tau)
    st = KinState(skeleton, Q, Qd)
    M = mass_matrix(skeleton, Q, state=st)
    rhs = bias_forces(skeleton, Q, Qd, state=st) + Tau
    if wrenches is not None:
        W = np.asarray(wrenches, dtype=float)
        if single and W.ndim == 2:
            W = W[None]
        for ci, cb in enumerate(skeleton.contact_bodies):
            Jc = contact_jacobian(skeleton, Q, cb, state=st)
            rhs += np.einsum("tik,ti->tk", Jc, W[:, ci])
    qdd = np.linalg.solve(M, rhs[..., None])[..., 0]
    return qdd[0] if single else qdd


# -- builtin models --------------------------------------------------------


def _pendulum2() -> Skeleton:
    l1, l2 = 0.5, 0.4
    bodies = [
        Body("link1", 1.5, np.diag([0.032, 0.002, 0.032]), [0.0, -l1 / 2, 0.0]),
        Body("link2", 0.9, np.diag([0.013, 0.001, 0.013]), [0.0, -l2 / 2, 0.0]),
    ]
    joints = [
        Joint("revolute", -1, [0.0, 0.0, 0.0], _EZ),
        Joint("revolute", 0, [0.0, -l1, 0.0], _EZ),
    ]
    return Skeleton("pendulum2", bodies, joints, subject_height=l1 + l2,
                    subject_mass_nominal=2.4)


def _freebox6() -> Skeleton:
    m = 10.0
    lx, ly, lz = 0.4, 0.3, 0.5
    inertia = m / 12.0 * np.diag([ly * ly + lz * lz, lx * lx + lz * lz,
                                  lx * lx + ly * ly])
    bodies = [Body("box", m, inertia, [0.0, 0.0, 0.0])]
    joints = [Joint("free", -1, [0.0, 0.0, 0.0])]
    markers = [MarkerDef(f"c{i}", 0,
                         [sx * lx / 2, sy * ly / 2, sz * lz / 2])
               for i, (sx, sy, sz) in enumerate(
                   (sx, sy, sz) for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1))]
    return Skeleton("freebox6", bodies, joints, contact_bodies=[0],
                    markers=markers, subject_height=ly, subject_mass_nominal=m)


def _biped12() -> Skeleton:
    bodies = [Body("pelvis", 40.0, np.diag([2.0, 1.5, 1.8]), [0.0, 0.1, 0.0])]
    joints = [Joint("free", -1, [0.0, 0.0, 0.0])]
    for side, sz in (("l", 1.0), ("r", -1.0)):
        bodies += [
            Body(f"thigh_{side}", 8.0, np.diag([0.12, 0.03, 0.12]), [0.0, -0.18, 0.0]),
            Body(f"shank_{side}", 4.5, np.diag([0.06, 0.015, 0.06]), [0.0, -0.18, 0.0]),
            Body(f"foot_{side}", 1.2, np.diag([0.004, 0.006, 0.004]), [0.06, -0.03, 0.0]),
        ]
        base = len(joints)
        joints += [
            Joint("revolute", 0, [0.0, -0.05, sz * 0.09], _EZ),        # hip pitch
            Joint("revolute", base, [0.0, -0.42, 0.0], _EZ),           # knee pitch
            Joint("revolute", base + 1, [0.0, -0.43, 0.0], _EZ),       # ankle pitch
        ]
    markers = [
        MarkerDef("pelvis_fl", 0, [0.10, 0.10, 0.12]),
        MarkerDef("pelvis_fr", 0, [0.10, 0.10, -0.12]),
        MarkerDef("pelvis_bl", 0, [-0.12, 0.05, 0.10]),
        MarkerDef("pelvis_br", 0, [-0.12, 0.05, -0.10]),
    ]
    for side, sz in (("l", 1.0), ("r", -1.0)):
        thigh = 1 if side == "l" else 4
        markers += [
            MarkerDef(f"thigh_{side}_u", thigh, [0.05, -0.15, sz * 0.05]),
            MarkerDef(f"thigh_{side}_d", thigh, [-0.04, -0.32, sz * 0.04]),
            MarkerDef(f"shank_{side}_u", thigh + 1, [0.04, -0.12, sz * 0.04]),
            MarkerDef(f"shank_{side}_d", thigh + 1, [-0.03, -0.33, sz * 0.03]),
            MarkerDef(f"foot_{side}_t", thigh + 2, [0.14, -0.04, sz * 0.02]),
            MarkerDef(f"foot_{side}_h", thigh + 2, [-0.05, -0.03, sz * 0.01]),
        ]
    return Skeleton("biped12", bodies, joints, contact_bodies=[3, 6],
                    markers=markers, subject_height=1.75,
                    subject_mass_nominal=67.4)


def builtin_models() -> dict:
    """The builtin test skeletons, keyed by name."""
    return {"pendulum2": _pendulum2(), "freebox6": _freebox6(),
            "biped12": _biped12()}
