import numpy as np
import pytest
import sympy as sp
from scipy.spatial.transform import Rotation

from conftest import random_pose
from mocapdyn import skeleton as sk
from mocapdyn.errors import InputError

RNG = np.random.default_rng(0)


# ---------------------------------------------------------------------------
# naive per-joint composition oracle (independent of the library internals)

def naive_fk(skel, q):
    """Compose one joint at a time with explicit 4x4 matrices."""
    transforms = []
    dof = 0
    for b, joint in enumerate(skel.joints):
        if joint.parent < 0:
            T = np.eye(4)
            T[:3, 3] = joint.offset
        else:
            T = transforms[joint.parent].copy()
            step = np.eye(4)
            step[:3, 3] = skel.bodies[joint.parent].scale * joint.offset
            T = T @ step
        if joint.kind == "free":
            rot, trans = q[dof:dof + 3], q[dof + 3:dof + 6]
            step = np.eye(4)
            step[:3, 3] = trans
            T = T @ step
            step = np.eye(4)
            step[:3, :3] = Rotation.from_euler("XYZ", rot).as_matrix()
            T = T @ step
            dof += 6
        elif joint.kind == "revolute":
            step = np.eye(4)
            step[:3, :3] = Rotation.from_rotvec(joint.axis * q[dof]).as_matrix()
            T = T @ step
            dof += 1
        else:
            step = np.eye(4)
            step[:3, 3] = joint.axis * q[dof]
            T = T @ step
            dof += 1
        transforms.append(T)
    return np.array(transforms)


def naive_markers(skel, q):
    T = naive_fk(skel, q)
    out = []
    for m in skel.markers:
        body = skel.bodies[m.body]
        out.append(T[m.body, :3, :3] @ (body.scale * m.offset) + T[m.body, :3, 3])
    return np.array(out)


# ---------------------------------------------------------------------------
# sympy Lagrangian oracle for the double pendulum

@pytest.fixture(scope="module")
def pendulum_oracle(pendulum):
    th1, th2, w1, w2 = sp.symbols("th1 th2 w1 w2")
    b1, b2 = pendulum.bodies
    l1 = -pendulum.joints[1].offset[1]
    g = 9.81

    c1y = b1.com_offset[1]
    c2y = b2.com_offset[1]
    # planar positions of the two CoMs (links hang along -y at zero pose)
    x1 = -c1y * sp.sin(th1)
    y1 = c1y * sp.cos(th1)
    x2 = l1 * sp.sin(th1) - c2y * sp.sin(th1 + th2)
    y2 = -l1 * sp.cos(th1) + c2y * sp.cos(th1 + th2)

    qs, qds = [th1, th2], [w1, w2]

    def vel(expr):
        return sum(sp.diff(expr, a) * b for a, b in zip(qs, qds))

    KE = (b1.mass * (vel(x1) ** 2 + vel(y1) ** 2) / 2
          + b2.mass * (vel(x2) ** 2 + vel(y2) ** 2) / 2
          + b1.inertia[2, 2] * w1 ** 2 / 2
          + b2.inertia[2, 2] * (w1 + w2) ** 2 / 2)
    PE = g * (b1.mass * y1 + b2.mass * y2)
    L = KE - PE

    M = sp.Matrix([[sp.diff(KE, a, b) for b in qds] for a in qds])
    # EoM: M qdd + h(q, qd) = tau  with qdd eliminated
    h = sp.Matrix([
        sum(sp.diff(sp.diff(L, qd), qq) * qqd for qq, qqd in zip(qs, qds))
        - sp.diff(L, qv)
        for qd, qv in zip(qds, qs)])
    Mf = sp.lambdify((th1, th2), M, "numpy")
    hf = sp.lambdify((th1, th2, w1, w2), h, "numpy")
    Ef = sp.lambdify((th1, th2, w1, w2), KE + PE, "numpy")

    def accel(q, qd):
        return np.linalg.solve(np.array(Mf(*q), dtype=float),
                               -np.array(hf(*q, *qd), dtype=float).ravel())

    return {"M": Mf, "accel": accel, "energy": Ef}


# ---------------------------------------------------------------------------
# forward kinematics and markers

def test_pendulum_zero_pose_reference(pendulum):
    T = sk.forward_kinematics(pendulum, np.zeros(2))
    assert np.allclose(T[0, :3, 3], [0, 0, 0])
    assert np.allclose(T[1, :3, 3], [0, -0.5, 0])
    assert np.allclose(T[0, :3, :3], np.eye(3))
    assert np.allclose(T[1, :3, :3], np.eye(3))


def test_freebox_pure_translation(freebox):
    T = sk.forward_kinematics(freebox, np.array([0, 0, 0, 1.0, 2.0, 3.0]))
    assert np.allclose(T[0, :3, 3], [1, 2, 3])
    assert np.allclose(T[0, :3, :3], np.eye(3))


def test_fk_matches_naive_composition(biped):
    for _ in range(20):
        q = random_pose(biped, RNG)
        T = sk.forward_kinematics(biped, q)
        assert np.allclose(T, naive_fk(biped, q), atol=1e-12)


def test_fk_dimension_mismatch(biped):
    with pytest.raises(InputError):
        sk.forward_kinematics(biped, np.zeros(5))


def test_marker_zero_offset_equals_body_origin(freebox):
    skel = sk.Skeleton("m", freebox.bodies, freebox.joints,
                       markers=[sk.MarkerDef("o", 0, [0, 0, 0])])
    q = random_pose(skel, RNG)
    m = sk.virtual_markers(skel, q)
    T = sk.forward_kinematics(skel, q)
    assert np.allclose(m[0], T[0, :3, 3], atol=1e-14)


def test_marker_componentwise_scaling():
    body = sk.Body("b", 1.0, np.eye(3) * 0.1, [0, 0, 0], scale=[2.0, 1.0, 1.0])
    skel = sk.Skeleton("s", [body], [sk.Joint("free", -1, [0, 0, 0])],
                       markers=[sk.MarkerDef("m", 0, [0.1, 0, 0])])
    m = sk.virtual_markers(skel, np.zeros(6))
    assert np.allclose(m[0], [0.2, 0, 0])


def test_markers_match_naive_oracle_with_scales(biped):
    scales = RNG.uniform(0.8, 1.2, (biped.n_bodies, 3))
    scaled = biped.with_scales(scales)
    for _ in range(10):
        q = random_pose(scaled, RNG)
        assert np.allclose(sk.virtual_markers(scaled, q),
                           naive_markers(scaled, q), atol=1e-12)


def test_no_crosstalk_from_extra_marker(biped):
    q = random_pose(biped, RNG)
    with_extra = sk.Skeleton(biped.name, biped.bodies, biped.joints,
                             biped.gravity, biped.contact_bodies,
                             biped.markers + [sk.MarkerDef("x", 2, [0, 0, 0])],
                             biped.subject_height, biped.subject_mass_nominal)
    nm = len(biped.markers)
    assert np.array_equal(sk.virtual_markers(with_extra, q)[:nm],
                          sk.virtual_markers(biped, q))
    assert np.array_equal(sk.forward_kinematics(with_extra, q),
                          sk.forward_kinematics(biped, q))
    assert np.array_equal(sk.center_of_mass(with_extra, q),
                          sk.center_of_mass(biped, q))


# ---------------------------------------------------------------------------
# center of mass

def test_com_single_body(freebox):
    q = random_pose(freebox, RNG)
    T = sk.forward_kinematics(freebox, q)
    assert np.allclose(sk.center_of_mass(freebox, q), T[0, :3, 3], atol=1e-14)


def test_com_two_equal_point_masses():
    tiny = np.eye(3) * 1e-6
    bodies = [sk.Body("a", 1.0, tiny, [0, 0, 0]),
              sk.Body("b", 1.0, tiny, [0, 0, 0])]
    joints = [sk.Joint("free", -1, [0, 0, 0]),
              sk.Joint("revolute", 0, [1.0, 0, 0], [0, 0, 1])]
    skel = sk.Skeleton("pair", bodies, joints)
    assert np.allclose(sk.center_of_mass(skel, np.zeros(7)), [0.5, 0, 0])


def test_com_jacobian_finite_differences(biped):
    h = 1e-6
    q = random_pose(biped, RNG)
    J = sk.com_jacobian(biped, q)
    for k in range(biped.dof_count):
        dq = np.zeros(biped.dof_count)
        dq[k] = h
        fd = (sk.center_of_mass(biped, q + dq)
              - sk.center_of_mass(biped, q - dq)) / (2 * h)
        assert np.allclose(J[:, k], fd, atol=1e-6)


# ---------------------------------------------------------------------------
# mass matrix, bias forces

def test_mass_matrix_free_box_translation_block(freebox):
    M = sk.mass_matrix(freebox, np.zeros(6))
    assert np.allclose(M[3:, 3:], 10.0 * np.eye(3), atol=1e-12)


def test_mass_matrix_double_pendulum_oracle(pendulum, pendulum_oracle):
    for _ in range(20):
        q = RNG.uniform(-3, 3, 2)
        M = sk.mass_matrix(pendulum, q)
        assert np.allclose(M, pendulum_oracle["M"](*q), atol=1e-9)


@pytest.mark.parametrize("name", ["pendulum2", "freebox6", "biped12"])
def test_mass_matrix_spd(models, name):
    skel = models[name]
    Q = np.stack([random_pose(skel, RNG, 1.2 if name != "biped12" else 0.5)
                  for _ in range(200)])
    M = sk.mass_matrix(skel, Q)
    assert np.max(np.abs(M - np.swapaxes(M, -1, -2))) < 1e-10
    assert np.min(np.linalg.eigvalsh(M)) > 0


def test_bias_zero_velocity_zero_gravity(biped):
    skel = sk.Skeleton(biped.name, biped.bodies, biped.joints, [0, 0, 0],
                       biped.contact_bodies, biped.markers)
    q = random_pose(skel, RNG)
    assert np.allclose(sk.bias_forces(skel, q, np.zeros(skel.dof_count)), 0,
                       atol=1e-12)


def test_bias_static_box_gravity(freebox):
    C = sk.bias_forces(freebox, np.zeros(6), np.zeros(6))
    assert np.allclose(C[4], 10.0 * -9.81)
    # statics closure: upward wrench through J^T zeroes the root residual
    w = np.array([[0, 0, 0, 0, 10.0 * 9.81, 0]])
    tau = sk.generalized_forces(freebox, np.zeros(6), np.zeros(6), np.zeros(6),
                                wrenches=w)
    assert np.allclose(tau, 0, atol=1e-9)


def test_pendulum_acceleration_matches_lagrangian(pendulum, pendulum_oracle):
    for _ in range(20):
        q = RNG.uniform(-3, 3, 2)
        qd = RNG.uniform(-5, 5, 2)
        qdd = sk.forward_dynamics(pendulum, q, qd, np.zeros(2))
        assert np.allclose(qdd, pendulum_oracle["accel"](q, qd), atol=1e-8)


def test_pendulum_energy_drift(pendulum, pendulum_oracle):
    q = np.array([1.0, 0.5])
    qd = np.array([0.0, 0.0])
    E0 = pendulum_oracle["energy"](*q, *qd)
    dt = 2e-3

    def deriv(state):
        qq, dq = state[:2], state[2:]
        return np.concatenate([dq, sk.forward_dynamics(pendulum, qq, dq,
                                                       np.zeros(2))])

    y = np.concatenate([q, qd])
    for _ in range(int(1.0 / dt)):
        k1 = deriv(y)
        k2 = deriv(y + dt / 2 * k1)
        k3 = deriv(y + dt / 2 * k2)
        k4 = deriv(y + dt * k3)
        y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    E1 = pendulum_oracle["energy"](y[0], y[1], y[2], y[3])
    assert abs(E1 - E0) / abs(E0) < 1e-4


# ---------------------------------------------------------------------------
# contact jacobian

def test_contact_jacobian_free_box_identity(freebox):
    J = sk.contact_jacobian(freebox, np.zeros(6), 0)
    assert np.allclose(J[3:, 3:], np.eye(3))
    assert np.allclose(J[:3, 3:], 0)


def test_contact_jacobian_finite_differences(biped):
    h = 1e-6
    q = random_pose(biped, RNG)
    for cb in biped.contact_bodies:
        J = sk.contact_jacobian(biped, q, cb)
        for k in range(biped.dof_count):
            dq = np.zeros(biped.dof_count)
            dq[k] = h
            Tp = sk.forward_kinematics(biped, q + dq)[cb]
            Tm = sk.forward_kinematics(biped, q - dq)[cb]
            lin = (Tp[:3, 3] - Tm[:3, 3]) / (2 * h)
            dR = (Tp[:3, :3] - Tm[:3, :3]) / (2 * h)
            W = dR @ sk.forward_kinematics(biped, q)[cb][:3, :3].T
            ang = np.array([W[2, 1], W[0, 2], W[1, 0]])
            assert np.allclose(J[3:, k], lin, atol=1e-5)
            assert np.allclose(J[:3, k], ang, atol=1e-5)


def test_contact_jacobian_invalid_body(biped):
    with pytest.raises(InputError):
        sk.contact_jacobian(biped, np.zeros(12), 1)


# ---------------------------------------------------------------------------
# builtin models

def test_builtin_models_shapes(models):
    assert models["biped12"].dof_count == 12
    assert len(models["biped12"].contact_bodies) == 2
    assert len(models["biped12"].markers) >= 12
    assert models["pendulum2"].dof_count == 2
    assert models["pendulum2"].contact_bodies == []
    assert models["freebox6"].dof_count == 6


def test_invalid_skeletons():
    tiny = np.eye(3) * 1e-3
    with pytest.raises(InputError):
        sk.Body("b", -1.0, tiny, [0, 0, 0])
    with pytest.raises(InputError):
        sk.Body("b", 1.0, -np.eye(3), [0, 0, 0])
    with pytest.raises(InputError):
        sk.Skeleton("s", [sk.Body("b", 1.0, tiny, [0, 0, 0])],
                    [sk.Joint("free", 0, [0, 0, 0])])
