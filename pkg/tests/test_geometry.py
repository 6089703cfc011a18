import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from socpgo.exceptions import DegenerateProjectionError, InvalidArgumentError, NearSingularityError
from socpgo.geometry import (
    Pose,
    chordal_distance,
    geodesic_angle,
    hat,
    is_rotation,
    project_to_so3,
    project_to_so3_batch,
    quat_to_rot,
    rot_to_quat,
    so3_exp,
    so3_exp_batch,
    so3_log,
    svd3,
    translation_residual,
    vee,
)

from conftest import random_rotations

finite = st.floats(-50, 50, allow_nan=False)
vec3 = arrays(np.float64, 3, elements=finite)
mat3 = arrays(np.float64, (3, 3), elements=st.floats(-10, 10, allow_nan=False))

# expm of hat((0.3, -0.2, 0.1)), computed with scipy's Pade expm
EXP_0 = np.array([
    [0.9752903089530457, -0.12733457491763023, -0.1805400766943977],
    [0.06803131640494003, 0.9505806179060915, -0.30293271340263717],
    [0.21019170595074285, 0.2831649605650737, 0.9357548032779189],
])


def assert_rotation(R, tol=1e-9):
    assert np.linalg.norm(R.T @ R - np.eye(3)) <= tol
    assert abs(np.linalg.det(R) - 1.0) <= tol


# -- exp / log ---------------------------------------------------------------

def test_exp_zero_is_identity():
    assert np.array_equal(so3_exp(np.zeros(3)), np.eye(3))


def test_exp_half_turn_z():
    np.testing.assert_allclose(so3_exp([0, 0, np.pi]), np.diag([-1.0, -1.0, 1.0]), atol=1e-15)


def test_exp_matches_pade_oracle():
    np.testing.assert_allclose(so3_exp([0.3, -0.2, 0.1]), EXP_0, atol=1e-12, rtol=0)


@given(vec3)
def test_exp_matches_expm(v):
    v = v / 20.0
    np.testing.assert_allclose(so3_exp(v), sla.expm(hat(v)), atol=1e-11)


def test_exp_small_angle_series_is_continuous():
    v = np.array([1.0, -2.0, 0.5])
    v /= np.linalg.norm(v)
    a = so3_exp(v * 1e-8 * (1 - 1e-7))
    b = so3_exp(v * 1e-8 * (1 + 1e-7))
    assert np.abs(a - b).max() < 1e-14
    np.testing.assert_allclose(a, np.eye(3) + hat(v * 1e-8), atol=1e-16)


def test_exp_rejects_nonfinite():
    with pytest.raises(InvalidArgumentError):
        so3_exp([np.nan, 0, 0])


def test_exp_batch_matches_single(rng):
    V = rng.normal(size=(20, 3))
    V[0] = 0.0
    V[1] = 1e-10
    E = so3_exp_batch(V)
    for k in range(20):
        np.testing.assert_allclose(E[k], so3_exp(V[k]), atol=1e-15)


def test_log_identity():
    assert np.array_equal(so3_log(np.eye(3)), np.zeros(3))


def test_log_round_trip_small():
    np.testing.assert_allclose(so3_log(so3_exp([0, 0, 0.5])), [0, 0, 0.5], atol=1e-12)


def test_log_of_three_radians_about_x():
    w = so3_log(so3_exp([3.0, 0, 0]))
    assert abs(np.linalg.norm(w) - 3.0) < 1e-9
    np.testing.assert_allclose(w, [3.0, 0, 0], atol=1e-9)


def test_log_near_pi_raises():
    with pytest.raises(NearSingularityError):
        so3_log(np.diag([-1.0, -1.0, 1.0]))


@given(arrays(np.float64, 3, elements=st.floats(-1, 1)), st.floats(0.0, np.pi - 0.1))
def test_exp_log_round_trip(axis, angle):
    n = np.linalg.norm(axis)
    v = np.zeros(3) if n < 1e-6 else axis / n * angle
    np.testing.assert_allclose(so3_log(so3_exp(v)), v, atol=1e-9)


def test_hat_vee():
    v = np.array([1.0, 2.0, 3.0])
    assert np.array_equal(vee(hat(v)), v)
    np.testing.assert_allclose(hat(v) @ np.array([4.0, 5.0, 6.0]), np.cross(v, [4, 5, 6]))


# -- projection ---------------------------------------------------------------

def test_projection_examples():
    assert np.array_equal(project_to_so3(np.eye(3)), np.eye(3))
    np.testing.assert_allclose(project_to_so3(2 * np.eye(3)), np.eye(3), atol=1e-15)
    np.testing.assert_allclose(project_to_so3(np.diag([3.0, 2.0, -1.0])), np.eye(3), atol=1e-15)


def test_projection_diag_against_grid_search():
    # maximize tr(R^T Y) over a dense grid of axis-angle rotations
    Y = np.diag([3.0, 2.0, -1.0])
    g = np.linspace(-np.pi, np.pi, 25)
    V = np.stack(np.meshgrid(g, g, g), -1).reshape(-1, 3)
    V = V[np.linalg.norm(V, axis=1) <= np.pi]
    R = so3_exp_batch(V)
    scores = np.einsum("kab,ab->k", R, Y)
    assert scores.max() <= np.sum(project_to_so3(Y) * Y) + 1e-12
    np.testing.assert_allclose(R[np.argmax(scores)], np.eye(3), atol=1e-12)


def test_projection_degenerate_cases():
    with pytest.raises(DegenerateProjectionError):
        project_to_so3(np.zeros((3, 3)))
    with pytest.raises(DegenerateProjectionError):
        project_to_so3(np.diag([2.0, 1.0, -1.0]))


def test_projection_batch_flags_degenerate():
    Y = np.stack([np.eye(3), np.zeros((3, 3)), np.diag([2.0, 1.0, -1.0])])
    R, bad = project_to_so3_batch(Y)
    assert bad.tolist() == [False, True, True]
    assert np.array_equal(R[0], np.eye(3))


def test_projection_fixes_rotations(rng):
    for R in random_rotations(rng, 50):
        np.testing.assert_allclose(project_to_so3(R), R, atol=1e-9)


@given(mat3)
def test_projection_is_rotation(Y):
    s = np.linalg.svd(Y, compute_uv=False)
    if s[0] < 1e-6 or s[1] - s[2] < 1e-9 * s[0]:
        return
    assert_rotation(project_to_so3(Y))


@given(mat3, st.floats(1e-3, 1e3))
def test_projection_scale_invariant(Y, c):
    s = np.linalg.svd(Y, compute_uv=False)
    if s[0] < 1e-3 or s[1] - s[2] < 1e-6 * s[0] or s[2] < 1e-6 * s[0]:
        return
    np.testing.assert_allclose(project_to_so3(c * Y), project_to_so3(Y), atol=1e-9)


def test_procrustes_optimality(rng):
    Q = random_rotations(rng, 100)
    for _ in range(200):
        Y = rng.normal(size=(3, 3))
        P = project_to_so3(Y)
        best = np.linalg.norm(P - Y)
        assert np.all(best <= np.linalg.norm(Q - Y, axis=(1, 2)) + 1e-9)


def test_svd3_triple(rng):
    Y = rng.normal(size=(3, 3))
    t = svd3(Y)
    np.testing.assert_allclose(t.U.T @ t.U, np.eye(3), atol=1e-9)
    np.testing.assert_allclose(t.V.T @ t.V, np.eye(3), atol=1e-9)
    assert np.all(np.diff(t.D) <= 0) and np.all(t.D >= 0)
    np.testing.assert_allclose(t.U @ np.diag(t.D) @ t.V.T, Y, atol=1e-12)


# -- distances ----------------------------------------------------------------

def test_chordal_examples(rng):
    assert chordal_distance(np.eye(3), np.eye(3)) == 0.0
    assert chordal_distance(np.eye(3), np.diag([-1.0, -1.0, 1.0])) == pytest.approx(np.sqrt(8), abs=1e-15)
    A, B = random_rotations(rng, 2)
    direct = np.sqrt(sum((A[r, c] - B[r, c]) ** 2 for r in range(3) for c in range(3)))
    assert chordal_distance(A, B) == pytest.approx(direct, abs=1e-12)


def test_chordal_transposed_form(rng):
    Ri, Rij = random_rotations(rng, 2)
    Rj = random_rotations(rng, 1)[0]
    assert chordal_distance(Ri @ Rij, Rj) == pytest.approx(
        np.linalg.norm(Rij.T @ Ri.T - Rj.T), abs=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_chordal_triangle(seed):
    A, B, C = random_rotations(np.random.default_rng(seed), 3)
    assert chordal_distance(A, C) <= chordal_distance(A, B) + chordal_distance(B, C) + 1e-9
    assert chordal_distance(A, B) == pytest.approx(chordal_distance(B, A), abs=1e-15)


def test_translation_residual_examples(rng):
    I = np.eye(3)
    assert translation_residual(np.zeros(3), [1, 0, 0], I, [1, 0, 0]) == 0.0
    assert translation_residual(np.zeros(3), np.zeros(3), I, [3, 4, 0]) == 5.0
    ti, tj, tij = rng.normal(size=(3, 3))
    R = random_rotations(rng, 1)[0]
    e = tj - ti - R @ tij
    assert translation_residual(ti, tj, R, tij) == pytest.approx(np.sqrt(e @ e), abs=1e-12)


def test_geodesic_angle():
    assert geodesic_angle(np.eye(3), so3_exp([0, 0.7, 0])) == pytest.approx(0.7, abs=1e-12)


# -- quaternions ----------------------------------------------------------------

def test_quat_examples():
    assert np.array_equal(quat_to_rot([0, 0, 0, 1]), np.eye(3))
    np.testing.assert_allclose(quat_to_rot([0, 0, 1, 0]), np.diag([-1.0, -1.0, 1.0]), atol=1e-15)
    with pytest.raises(InvalidArgumentError):
        quat_to_rot([0, 0, 0, 0])


def test_quat_hamilton_convention():
    # 90 degrees about z: q = (0, 0, sin 45, cos 45)
    s = np.sqrt(0.5)
    np.testing.assert_allclose(quat_to_rot([0, 0, s, s]) @ [1, 0, 0], [0, 1, 0], atol=1e-15)


@given(arrays(np.float64, 4, elements=st.floats(-1, 1)))
def test_quat_round_trip(q):
    if np.linalg.norm(q) < 1e-3:
        return
    q = q / np.linalg.norm(q)
    R = quat_to_rot(q)
    assert_rotation(R)
    p = rot_to_quat(R)
    assert min(np.abs(p - q).max(), np.abs(p + q).max()) < 1e-9


# -- poses -----------------------------------------------------------------------

def test_pose_compose_inverse(rng):
    R1, R2 = random_rotations(rng, 2)
    a = Pose(R1, rng.normal(size=3))
    b = Pose(R2, rng.normal(size=3))
    np.testing.assert_allclose(a.compose(b).as_matrix(), a.as_matrix() @ b.as_matrix(), atol=1e-12)
    e = a.compose(a.inverse())
    np.testing.assert_allclose(e.rotation, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(e.translation, 0, atol=1e-12)


def test_is_rotation():
    assert is_rotation(np.eye(3))
    assert not is_rotation(np.diag([1.0, 1.0, -1.0]))
    assert not is_rotation(2 * np.eye(3))
