"""Modulation-function families on ``[0, pi]`` obeying sum_k g_k^2 == 1."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from .errors import ConfigError, InputError

PI = math.pi
# Values past pi by at most this much are clamped silently.
CLAMP_SLACK = 1e-12


def _sigmoid_funcs(alpha: float):
    def z(xi):
        return alpha * (xi / PI - 0.5)

    def g0(xi):
        return np.sqrt(expit(-z(xi)))

    def g1(xi):
        return np.sqrt(expit(z(xi)))

    return (g0, g1)


def _entropy_funcs(alpha: float):
    def g1_sq(xi):
        x = xi / PI
        return 4.0 * alpha * x - 4.0 * alpha * x * x

    def g0(xi):
        rest = np.maximum(1.0 - g1_sq(xi), 0.0)
        return np.where(xi <= PI / 2, np.sqrt(rest), 0.0)

    def g1(xi):
        return np.sqrt(np.maximum(g1_sq(xi), 0.0))

    def g2(xi):
        rest = np.maximum(1.0 - g1_sq(xi), 0.0)
        return np.where(xi > PI / 2, np.sqrt(rest), 0.0)

    return (g0, g1, g2)


@dataclass(frozen=True)
class ModulationFamily:
    """A quasi-framelet: K+1 scalar maps whose squares sum to one.

    Use :func:`sigmoid`, :func:`entropy` or :func:`custom_family` to build one.
    """

    name: str
    alpha: float | None
    funcs: tuple[Callable[[np.ndarray], np.ndarray], ...] = field(repr=False, compare=False)

    @property
    def K(self) -> int:
        return len(self.funcs) - 1

    def __call__(self, k: int, xi):
        return evaluate(self, k, xi)


def sigmoid(alpha: float = 20.0) -> ModulationFamily:
    """Sigmoid family, K=1. ``alpha`` controls the transition sharpness."""
    alpha = float(alpha)
    if not alpha > 0 or not math.isfinite(alpha):
        raise ConfigError(f"sigmoid alpha must be > 0, got {alpha}")
    return ModulationFamily("sigmoid", alpha, _sigmoid_funcs(alpha))


def entropy(alpha: float = 0.75) -> ModulationFamily:
    """Entropy family, K=2, with ``0 < alpha <= 1``.

    g_1^2 is the scaled binary-entropy-like bump 4*alpha*x*(1-x), x = xi/pi.
    g_0 carries the remainder left of pi/2, g_2 right of it.
    """
    alpha = float(alpha)
    if not 0 < alpha <= 1:
        raise ConfigError(f"entropy alpha must lie in (0, 1], got {alpha}")
    return ModulationFamily("entropy", alpha, _entropy_funcs(alpha))


FAMILIES = {"sigmoid": sigmoid, "entropy": entropy}


def make_family(name: str, alpha: float | None = None) -> ModulationFamily:
    try:
        factory = FAMILIES[name.lower()]
    except KeyError:
        raise ConfigError(f"unknown modulation family {name!r}; choose from {sorted(FAMILIES)}") from None
    return factory() if alpha is None else factory(alpha)


def custom_family(
    name: str,
    funcs: Sequence[Callable],
    grid_size: int = 1001,
    tol: float = 1e-10,
) -> ModulationFamily:
    """Register a user family; rejected unless the partition identity holds on the grid."""
    if len(funcs) < 1:
        raise ConfigError("a modulation family needs at least one function")
    fam = ModulationFamily(name, None, tuple(funcs))
    dev = validate_partition(fam, grid_size)
    if dev > tol:
        raise ConfigError(f"family {name!r} violates the identity condition by {dev:.3g}")
    return fam


def _clamp(xi):
    xi = np.asarray(xi, dtype=float)
    if np.any(xi < -CLAMP_SLACK) or np.any(xi > PI + CLAMP_SLACK):
        raise InputError("modulation argument outside [0, pi]")
    return np.clip(xi, 0.0, PI)


def evaluate(fam: ModulationFamily, k: int, xi):
    """Evaluate ``g_k`` at ``xi`` (scalar or array)."""
    if not 0 <= k <= fam.K:
        raise InputError(f"k={k} outside [0, {fam.K}] for family {fam.name}")
    xi_arr = _clamp(xi)
    out = np.asarray(fam.funcs[k](xi_arr), dtype=float)
    out = np.broadcast_to(out, xi_arr.shape).copy() if out.shape != xi_arr.shape else out
    return float(out) if out.ndim == 0 else out


def evaluate_all(fam: ModulationFamily, xi) -> np.ndarray:
    """Stack of all K+1 functions at ``xi``; shape ``(K+1,) + xi.shape``."""
    return np.stack([np.asarray(evaluate(fam, k, xi)) for k in range(fam.K + 1)])


def validate_partition(fam: ModulationFamily, grid_size: int = 1001) -> float:
    """Max deviation of sum_k g_k^2 from one on a uniform grid of ``[0, pi]``."""
    if grid_size < 2:
        raise InputError("grid_size must be at least 2")
    grid = np.linspace(0.0, PI, grid_size)
    total = np.sum(evaluate_all(fam, grid) ** 2, axis=0)
    return float(np.max(np.abs(total - 1.0)))
