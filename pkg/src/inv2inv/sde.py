"""Variance-preserving SDE with a linear beta schedule."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError


@dataclass(frozen=True)
class SdeSchedule:
    """``dy = -0.5 beta(t) y dt + sqrt(beta(t)) dw`` on ``[0, T]``.

    ``beta`` is linear from ``beta_min`` at t=0 to ``beta_max`` at t=T, which
    gives ``alpha(t) = exp(-0.5 * int_0^t beta)`` in closed form.
    """

    beta_min: float = 0.1
    beta_max: float = 20.0
    T: float = 1.0

    def __post_init__(self):
        if not (0 < self.beta_min < self.beta_max):
            raise DomainError(f"need 0 < beta_min < beta_max, got {self.beta_min}, {self.beta_max}")
        if not self.T > 0:
            raise DomainError(f"horizon T must be positive, got {self.T}")

    def _check_t(self, t):
        t_arr = np.asarray(t, dtype=np.float64)
        if np.any(~np.isfinite(t_arr)) or np.any(t_arr < 0) or np.any(t_arr > self.T):
            raise DomainError(f"time outside [0, {self.T}]: {t}")
        return t_arr

    def beta(self, t):
        t = self._check_t(t)
        return self.beta_min + (t / self.T) * (self.beta_max - self.beta_min)

    def integrated_beta(self, t):
        t = self._check_t(t)
        return self.beta_min * t + 0.5 * (self.beta_max - self.beta_min) * t * t / self.T

    def alpha_sigma(self, t):
        """Return ``(alpha(t), sigma(t))``; ``sigma = sqrt(1 - alpha^2)``."""
        ib = self.integrated_beta(t)
        alpha = np.exp(-0.5 * ib)
        sigma = np.sqrt(-np.expm1(-ib))
        if alpha.ndim == 0:
            return float(alpha), float(sigma)
        return alpha, sigma

    def perturb(self, y0: np.ndarray, t: float, z: np.ndarray) -> np.ndarray:
        y0 = np.asarray(y0, dtype=np.float64)
        z = np.asarray(z, dtype=np.float64)
        if y0.shape != z.shape:
            raise ShapeError(f"noise shape {z.shape} != data shape {y0.shape}")
        a, s = self.alpha_sigma(t)
        return a * y0 + s * z

    def transition(self, s: float, t: float) -> tuple[float, float]:
        """Mean scale and std of the forward kernel from time ``s`` to ``t >= s``."""
        if t < s:
            raise DomainError(f"transition needs s <= t, got s={s}, t={t}")
        ib = self.integrated_beta(t) - self.integrated_beta(s)
        return float(np.exp(-0.5 * ib)), float(np.sqrt(-np.expm1(-ib)))

    def drift(self, y: np.ndarray, t: float) -> np.ndarray:
        return -0.5 * self.beta(t) * np.asarray(y, dtype=np.float64)

    def diffusion(self, t: float):
        g = np.sqrt(self.beta(t))
        return float(g) if np.ndim(g) == 0 else g
