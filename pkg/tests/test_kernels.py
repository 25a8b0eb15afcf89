"""The compiled and numpy kernels must agree, and both must satisfy their adjoints."""

import numpy as np
import pytest

from inv2inv import kernels
from inv2inv.rng import CounterStream

BACKENDS = kernels.available_backends()


@pytest.fixture
def rs():
    return CounterStream(77, 80)


def dot(a, b):
    return float(np.sum(a * b))


def test_active_backend_is_listed():
    assert kernels.BACKEND in BACKENDS


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_sobel_step_by_hand(name):
    k = BACKENDS[name]
    img = np.zeros((1, 4, 4))
    img[:, :, 2:] = 1.0
    gx, gy = k.sobel(img)
    # columns 1 and 2 see the step with weights 1+2+1 = 4
    np.testing.assert_array_equal(gx[0], [[0, 4, 4, 0]] * 4)
    np.testing.assert_array_equal(gy, np.zeros_like(gy))


@pytest.mark.parametrize("name", sorted(BACKENDS))
@pytest.mark.parametrize("shape", [(1, 3, 3), (2, 5, 7), (3, 16, 16)])
def test_sobel_adjoint(name, shape, rs):
    k = BACKENDS[name]
    x = rs.normal(shape)
    gx, gy = k.sobel(x)
    ux, uy = rs.normal(shape), rs.normal(shape)
    lhs = dot(gx, ux) + dot(gy, uy)
    rhs = dot(x, k.sobel_adjoint(ux, uy))
    assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), 1.0)


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_conv_adjoint(name, rs):
    k = BACKENDS[name]
    w = rs.normal((8, 3, 3, 3))
    x = rs.normal((2, 3, 9, 6))
    u = rs.normal((2, 8, 9, 6))
    lhs, rhs = dot(k.conv3x3(x, w), u), dot(x, k.conv3x3_adjoint(u, w))
    assert abs(lhs - rhs) <= 1e-10 * abs(lhs)


@pytest.mark.skipif("cython" not in BACKENDS, reason="compiled extension not built")
@pytest.mark.parametrize("shape", [(1, 3, 3), (4, 32, 32), (2, 17, 5)])
def test_backends_agree(shape, rs):
    py, cy = BACKENDS["numpy"], BACKENDS["cython"]
    x = rs.normal(shape)
    for a, b in zip(py.sobel(x), cy.sobel(x)):
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)
    ux, uy = rs.normal(shape), rs.normal(shape)
    np.testing.assert_allclose(py.sobel_adjoint(ux, uy), cy.sobel_adjoint(ux, uy), atol=1e-12)
    w = rs.normal((8, 3, 3, 3))
    xc = rs.normal((shape[0], 3) + shape[1:])
    np.testing.assert_allclose(py.conv3x3(xc, w), cy.conv3x3(xc, w), atol=1e-12)
    uc = rs.normal((shape[0], 8) + shape[1:])
    np.testing.assert_allclose(py.conv3x3_adjoint(uc, w), cy.conv3x3_adjoint(uc, w), atol=1e-12)


def test_pure_python_switch(monkeypatch):
    import importlib

    monkeypatch.setenv("INV2INV_PURE_PYTHON", "1")
    try:
        mod = importlib.reload(kernels)
        assert mod.BACKEND == "numpy"
    finally:
        monkeypatch.delenv("INV2INV_PURE_PYTHON")
        importlib.reload(kernels)
