"""Pure numpy implementations of the 3x3 stencil kernels.

Layouts: images are ``(B, H, W)`` for the Sobel pair and ``(B, C, H, W)`` for
the convolution bank; weights are ``(C_out, C_in, 3, 3)``.  All stencils are
correlations (no kernel flip).
"""

import numpy as np

SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T.copy()


def sobel(lum):
    """Sobel responses of ``lum`` with replicate boundary handling."""
    lum = np.ascontiguousarray(lum, dtype=np.float64)
    p = np.pad(lum, ((0, 0), (1, 1), (1, 1)), mode="edge")
    dx = p[:, :, 2:] - p[:, :, :-2]
    gx = dx[:, :-2] + 2.0 * dx[:, 1:-1] + dx[:, 2:]
    dy = p[:, 2:, :] - p[:, :-2, :]
    gy = dy[:, :, :-2] + 2.0 * dy[:, :, 1:-1] + dy[:, :, 2:]
    return gx, gy


def sobel_adjoint(ux, uy):
    """Adjoint of :func:`sobel` applied to the cotangent pair ``(ux, uy)``."""
    ux = np.asarray(ux, dtype=np.float64)
    uy = np.asarray(uy, dtype=np.float64)
    B, H, W = ux.shape
    q = np.zeros((B, H + 2, W + 2))
    for a in range(3):
        for b in range(3):
            kx, ky = SOBEL_X[a, b], SOBEL_Y[a, b]
            if kx == 0.0 and ky == 0.0:
                continue
            q[:, a : a + H, b : b + W] += kx * ux + ky * uy
    # fold the replicate padding back onto the border
    q[:, 1, :] += q[:, 0, :]
    q[:, H, :] += q[:, H + 1, :]
    q[:, 1 : H + 1, 1] += q[:, 1 : H + 1, 0]
    q[:, 1 : H + 1, W] += q[:, 1 : H + 1, W + 1]
    return q[:, 1 : H + 1, 1 : W + 1].copy()


def conv3x3(x, w):
    """Multi-channel 3x3 correlation with zero padding."""
    x = np.asarray(x, dtype=np.float64)
    B, C, H, W = x.shape
    p = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    out = np.zeros((B, w.shape[0], H, W))
    for a in range(3):
        for b in range(3):
            out += np.einsum("oc,bchw->bohw", w[:, :, a, b], p[:, :, a : a + H, b : b + W])
    return out


def conv3x3_adjoint(u, w):
    u = np.asarray(u, dtype=np.float64)
    B, O, H, W = u.shape
    q = np.zeros((B, w.shape[1], H + 2, W + 2))
    for a in range(3):
        for b in range(3):
            q[:, :, a : a + H, b : b + W] += np.einsum("oc,bohw->bchw", w[:, :, a, b], u)
    return q[:, :, 1 : H + 1, 1 : W + 1].copy()
