"""Backend equivalence: the compiled kernels and the numpy fallback must
agree to rounding, and both must match independent references."""

import numpy as np
import pytest

from pollink import _kernels_py as kpy
from pollink._backend import K, backend_name

try:
    from pollink import _kernels_cy as kcy
except ImportError:
    kcy = None

from scipy.spatial.transform import Rotation

BACKENDS = [kpy] + ([kcy] if kcy is not None else [])


def random_axes_angles(rng, n):
    axes = rng.normal(size=(n, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    return axes, rng.uniform(0.0, np.pi, n)


def random_field(rng, n):
    axes, angles = random_axes_angles(rng, n)
    return kpy.rotations_from_axis_angle(axes, angles)


def test_active_backend_is_known():
    assert backend_name() in ("compiled", "python")
    assert K.BACKEND_NAME == backend_name()


@pytest.mark.parametrize("kernels", BACKENDS, ids=lambda k: k.BACKEND_NAME)
def test_axis_angle_matches_scipy(kernels, rng):
    axes, angles = random_axes_angles(rng, 200)
    ours = kernels.rotations_from_axis_angle(axes, angles)
    ref = Rotation.from_rotvec(axes * angles[:, None]).as_matrix()
    assert np.abs(ours - ref).max() < 1e-12


@pytest.mark.parametrize("kernels", BACKENDS, ids=lambda k: k.BACKEND_NAME)
def test_compose_left_matches_matmul(kernels, rng):
    field = random_field(rng, 100)
    rot = random_field(rng, 100)
    expected = rot @ field
    work = field.copy()
    kernels.compose_left_inplace(work, rot)
    assert np.abs(work - expected).max() < 1e-13


@pytest.mark.parametrize("kernels", BACKENDS, ids=lambda k: k.BACKEND_NAME)
def test_compose_single_left(kernels, rng):
    field = random_field(rng, 64)
    rot = random_field(rng, 1)[0]
    expected = rot @ field
    work = field.copy()
    kernels.compose_single_left_inplace(work, rot)
    assert np.abs(work - expected).max() < 1e-13


@pytest.mark.parametrize("kernels", BACKENDS, ids=lambda k: k.BACKEND_NAME)
def test_drift_step_is_fused_compose(kernels, rng):
    field = random_field(rng, 91)
    axes, angles = random_axes_angles(rng, 91)
    expected = kpy.rotations_from_axis_angle(axes, angles) @ field
    work = field.copy()
    kernels.drift_step_inplace(work, axes, angles)
    assert np.abs(work - expected).max() < 1e-13


@pytest.mark.parametrize("kernels", BACKENDS, ids=lambda k: k.BACKEND_NAME)
def test_apply_matrices_vec(kernels, rng):
    field = random_field(rng, 91)
    v = rng.normal(size=3)
    assert np.abs(kernels.apply_matrices_vec(field, v) - field @ v).max() < 1e-13


@pytest.mark.parametrize("kernels", BACKENDS, ids=lambda k: k.BACKEND_NAME)
def test_rotation_angles_recover_construction(kernels, rng):
    axes, angles = random_axes_angles(rng, 500)
    field = kpy.rotations_from_axis_angle(axes, angles)
    assert np.abs(kernels.rotation_angles(field) - angles).max() < 1e-9


@pytest.mark.parametrize("kernels", BACKENDS, ids=lambda k: k.BACKEND_NAME)
def test_retarder_chain_matches_composition(kernels, rng):
    unit = np.eye(3)
    for _ in range(20):
        phis = rng.uniform(0.0, 2 * np.pi, 4)
        ids = rng.integers(0, 3, 4)
        expected = np.eye(3)
        for phi, ax in zip(phis, ids):
            expected = (
                Rotation.from_rotvec(unit[ax] * phi).as_matrix() @ expected
            )
        got = kernels.retarder_chain(phis, ids)
        assert np.abs(got - expected).max() < 1e-12


@pytest.mark.skipif(kcy is None, reason="compiled kernels unavailable")
def test_backends_agree_bitwise_closely(rng):
    field = random_field(rng, 91)
    axes, angles = random_axes_angles(rng, 91)
    a, b = field.copy(), field.copy()
    kpy.drift_step_inplace(a, axes, angles)
    kcy.drift_step_inplace(b, axes, angles)
    assert np.abs(a - b).max() < 1e-14
    assert np.abs(kpy.rotation_angles(a) - kcy.rotation_angles(a)).max() < 1e-14
    phis = rng.uniform(0.0, 2 * np.pi, 4)
    ids = np.array([0, 1, 0, 1])
    assert np.abs(kpy.retarder_chain(phis, ids) - kcy.retarder_chain(phis, ids)).max() < 1e-14


def test_readonly_inputs_accepted():
    field = np.broadcast_to(np.eye(3), (8, 3, 3)).copy()
    rot = np.eye(3)
    rot.setflags(write=False)
    K.compose_single_left_inplace(field, rot)
    assert np.allclose(field, np.broadcast_to(np.eye(3), (8, 3, 3)))
