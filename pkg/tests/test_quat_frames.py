import numpy as np
import pytest

from landergnc import quat
from landergnc.frames import downrange_angle, enu_triad, mci_to_enu, enu_to_mci, ric_triad


def random_quat(rng):
    v = rng.normal(size=4)
    return quat.normalize(v)


def test_rotate_matches_dcm():
    rng = np.random.default_rng(1)
    for _ in range(50):
        q = random_quat(rng)
        v = rng.normal(size=3)
        assert np.allclose(quat.rotate(q, v), quat.dcm(q) @ v, atol=1e-12)
        assert np.allclose(quat.rotate_back(q, v), quat.dcm(q).T @ v, atol=1e-12)


def test_composition_order():
    # body-frame increment composes on the right: A(q*dq) = A(dq) A(q)
    rng = np.random.default_rng(2)
    for _ in range(20):
        q = random_quat(rng)
        dq = quat.from_rotvec(0.3 * rng.normal(size=3))
        lhs = quat.dcm(quat.qmul(q, dq))
        rhs = quat.dcm(dq) @ quat.dcm(q)
        assert np.allclose(lhs, rhs, atol=1e-12)


def test_normalize_sign_and_norm():
    rng = np.random.default_rng(3)
    for _ in range(20):
        q = quat.normalize(rng.normal(size=4))
        assert abs(quat.qnorm(q) - 1.0) < 1e-12
        assert q[0] >= 0.0


def test_rotvec_roundtrip():
    rng = np.random.default_rng(4)
    for _ in range(30):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        phi = axis * rng.uniform(1e-8, np.pi - 0.05)
        q = quat.from_rotvec(phi)
        assert np.allclose(quat.to_rotvec(q), phi, atol=1e-9)


def test_from_dcm_roundtrip():
    rng = np.random.default_rng(5)
    for _ in range(50):
        q = random_quat(rng)
        q2 = quat.from_dcm(quat.dcm(q))
        assert min(np.linalg.norm(q2 - q), np.linalg.norm(q2 + q)) < 1e-9


def test_slerp_endpoints_and_equal_quats():
    rng = np.random.default_rng(6)
    qa, qb = random_quat(rng), random_quat(rng)
    assert np.allclose(quat.slerp(qa, qb, 0.0), qa, atol=1e-12)
    d = min(np.linalg.norm(quat.slerp(qa, qb, 1.0) - qb),
            np.linalg.norm(quat.slerp(qa, qb, 1.0) + qb))
    assert d < 1e-12
    mid = quat.slerp(qa, qa, 0.5)
    assert min(np.linalg.norm(mid - qa), np.linalg.norm(mid + qa)) < 1e-12


def test_slerp_halfway_angle():
    qa = quat.qidentity()
    qb = quat.from_axis_angle([0, 0, 1], 1.0)
    qm = quat.slerp(qa, qb, 0.5)
    assert abs(quat.angle_between(qa, qm) - 0.5) < 1e-12


def test_step_attitude_constant_rate():
    q = quat.qidentity()
    w = np.array([0.0, 0.0, 0.1])
    for _ in range(100):
        q = quat.step_attitude(q, w, 0.1)
    # 1 rad total rotation about z
    assert abs(quat.angle_between(quat.qidentity(), q) - 1.0) < 1e-12


# frames -----------------------------------------------------------------

def test_enu_axis_aligned_case():
    # reference on the equatorial x-axis: Up=+x, East=+y, North=+z
    triad = enu_triad(np.array([1.7e6, 0.0, 0.0]))
    assert np.allclose(triad[2], [1, 0, 0], atol=1e-12)   # up
    assert np.allclose(triad[0], [0, 1, 0], atol=1e-12)   # east
    assert np.allclose(triad[1], [0, 0, 1], atol=1e-12)   # north


def test_enu_orthonormal():
    rng = np.random.default_rng(7)
    for _ in range(20):
        triad = enu_triad(rng.normal(size=3) * 1e6 + np.array([2e6, 0, 0]))
        assert np.allclose(triad @ triad.T, np.eye(3), atol=1e-12)


def test_enu_roundtrip():
    rng = np.random.default_rng(8)
    triad = enu_triad(np.array([1.2e6, -0.4e6, 0.9e6]))
    for _ in range(10):
        v = rng.normal(size=3)
        assert np.allclose(enu_to_mci(mci_to_enu(v, triad), triad), v, atol=1e-12)


def test_enu_polar_tie_break():
    triad = enu_triad(np.array([0.0, 0.0, 1.8e6]))
    assert np.allclose(triad @ triad.T, np.eye(3), atol=1e-12)
    assert np.allclose(triad[2], [0, 0, 1], atol=1e-12)
    # east from projected inertial x-axis
    assert np.allclose(triad[0], [1, 0, 0], atol=1e-12)


def test_enu_zero_reference_rejected():
    with pytest.raises(ValueError):
        enu_triad(np.zeros(3))


def test_ric_triad_geometry():
    pos = np.array([1.75e6, 0.0, 0.0])
    vel = np.array([0.0, 1.7e3, 0.0])
    t = ric_triad(pos, vel)
    assert np.allclose(t[0], [1, 0, 0], atol=1e-12)   # radial
    assert np.allclose(t[1], [0, 1, 0], atol=1e-12)   # in-track
    assert np.allclose(t[2], [0, 0, 1], atol=1e-12)   # cross-track


def test_downrange_angle():
    a = np.array([1.0, 0.0, 0.0])
    b = np.array([np.cos(0.3), np.sin(0.3), 0.0])
    assert abs(downrange_angle(a, b) - 0.3) < 1e-12
