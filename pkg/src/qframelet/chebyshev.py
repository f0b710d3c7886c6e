"""Chebyshev-accelerated quasi-framelet decomposition and reconstruction.

Each modulation function is replaced by its degree-n Chebyshev interpolant
on ``[0, pi]``. A polynomial of ``L / s^j`` applied to a signal costs ``n``
sparse products through the three-term recurrence, so no eigenvectors are
ever needed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev as npcheb

from .errors import ConfigError, InputError
from .exact import (
    EigenSystem,
    FrameletCoefficients,
    FrameletSpec,
    TransformBlocks,
    block_count,
    block_index,
    blocks_from_spectra,
    chain_spectra,
    make_spec,
)
from .graph import NormalizedLaplacian
from .modulation import PI, ModulationFamily, evaluate

DEFAULT_DEGREE = 3
CUTOFF_MODES = ("none", "partial", "full")


def fit_chebyshev(fam: ModulationFamily, k: int, degree: int = DEFAULT_DEGREE) -> np.ndarray:
    """Chebyshev coefficients interpolating ``g_k`` at the degree+1 Chebyshev points.

    The basis variable is ``t = 2*xi/pi - 1`` so that ``[0, pi]`` maps to ``[-1, 1]``.
    """
    if degree < 1:
        raise InputError(f"degree must be >= 1, got {degree}")

    def target(t):
        xi = (np.asarray(t) + 1.0) * (PI / 2)
        return evaluate(fam, k, xi) * np.ones_like(xi)

    return npcheb.chebinterpolate(target, degree)


def chebyshev_points(degree: int) -> np.ndarray:
    """Interpolation nodes on ``[0, pi]`` used by :func:`fit_chebyshev`."""
    t = npcheb.chebpts1(degree + 1)
    return (t + 1.0) * (PI / 2)


def cheb_eval(coeffs: np.ndarray, xi) -> np.ndarray:
    """Evaluate a fitted polynomial at ``xi`` (no clamping)."""
    return npcheb.chebval(2.0 * np.asarray(xi, dtype=float) / PI - 1.0, coeffs)


@dataclass(frozen=True)
class ChebFilter:
    degree: int
    coeffs: np.ndarray = field(repr=False)  # (K+1, degree+1)

    @property
    def K(self) -> int:
        return self.coeffs.shape[0] - 1

    def __call__(self, k: int, xi) -> np.ndarray:
        return cheb_eval(self.coeffs[k], xi)


def fit_filter(fam: ModulationFamily, degree: int = DEFAULT_DEGREE) -> ChebFilter:
    coeffs = np.stack([fit_chebyshev(fam, k, degree) for k in range(fam.K + 1)])
    return ChebFilter(int(degree), coeffs)


def _operator(lap):
    return lap.matrix if isinstance(lap, NormalizedLaplacian) else lap


def apply_filter(coeffs: np.ndarray, lap, scale_exponent: float, X, dilation: float = 2.0) -> np.ndarray:
    """Compute ``p(L / dilation**s) @ X`` with the Chebyshev recurrence.

    Args:
        coeffs: Chebyshev coefficients in the variable ``2*xi/pi - 1``.
        lap: a NormalizedLaplacian, sparse matrix, or anything supporting ``@``.
        scale_exponent: ``s`` in ``L / dilation**s``.
        X: signal of shape ``(N,)`` or ``(N, d)``.

    Exactly ``len(coeffs) - 1`` products with the Laplacian are performed.
    """
    op = _operator(lap)
    X = np.asarray(X, dtype=float)
    coeffs = np.asarray(coeffs, dtype=float)
    n = coeffs.size - 1
    # t(L) = a*L - I maps the scaled spectrum [0, pi] onto [-1, 1]
    a = 2.0 / (PI * dilation ** scale_exponent)
    t_prev = X
    out = coeffs[0] * X
    if n == 0:
        return out
    t_curr = a * (op @ X) - X
    out = out + coeffs[1] * t_curr
    for j in range(2, n + 1):
        t_next = 2.0 * (a * (op @ t_curr) - t_curr) - t_prev
        out = out + coeffs[j] * t_next
        t_prev, t_curr = t_curr, t_next
    return out


def cutoff_mask(mode: str, K: int, levels: int) -> np.ndarray:
    """Boolean keep-mask over the canonical blocks.

    ``partial`` drops the highest band at the finest level, ``(K, 0)``;
    ``full`` drops ``(K, l)`` at every level.
    """
    if mode not in CUTOFF_MODES:
        raise ConfigError(f"unknown cutoff mode {mode!r}; choose from {CUTOFF_MODES}")
    idx = block_index(K, levels)
    if mode == "none":
        return np.ones(len(idx), dtype=bool)
    if mode == "partial":
        return np.array([b != (K, 0) for b in idx])
    return np.array([not (k == K and K > 0) for k, _ in idx])


@dataclass(frozen=True)
class FastTransformPlan:
    cheb: ChebFilter
    spec: FrameletSpec
    lap: object = field(repr=False)
    mask: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.cheb.K != self.spec.K:
            raise InputError("Chebyshev filter and framelet spec disagree on K")
        if self.mask is None:
            object.__setattr__(self, "mask", cutoff_mask("none", self.spec.K, self.spec.levels))
        mask = np.asarray(self.mask, dtype=bool)
        if mask.shape != (self.spec.num_blocks,):
            raise InputError(f"mask needs {self.spec.num_blocks} entries, got {mask.shape}")
        object.__setattr__(self, "mask", mask)

    @property
    def K(self) -> int:
        return self.spec.K

    @property
    def levels(self) -> int:
        return self.spec.levels

    @property
    def num_blocks(self) -> int:
        return self.spec.num_blocks

    @property
    def num_nodes(self) -> int:
        return _operator(self.lap).shape[0]

    def with_mask(self, mode_or_mask) -> "FastTransformPlan":
        mask = (
            cutoff_mask(mode_or_mask, self.K, self.levels)
            if isinstance(mode_or_mask, str)
            else mode_or_mask
        )
        return FastTransformPlan(self.cheb, self.spec, self.lap, mask)

    def filter(self, k: int, level: int, X) -> np.ndarray:
        exponent = self.spec.coarsest_scale + level
        return apply_filter(self.cheb.coeffs[k], self.lap, exponent, X, self.spec.dilation)


def make_plan(
    lap: NormalizedLaplacian,
    family: ModulationFamily,
    levels: int = 2,
    dilation: float = 2.0,
    degree: int = DEFAULT_DEGREE,
    cutoff: str = "none",
) -> FastTransformPlan:
    spec = make_spec(family, levels, lap.lambda_max, dilation)
    return FastTransformPlan(fit_filter(family, degree), spec, lap, cutoff_mask(cutoff, family.K, levels))


def fast_decompose(plan: FastTransformPlan, X) -> FrameletCoefficients:
    """Framelet coefficients by the forward recursion.

    Level 0 filters the input directly; level l filters the previous low-pass
    output ``Phi_{0,l-1}``. The mask is ignored here.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != plan.num_nodes:
        raise InputError(f"signal has {X.shape[0]} rows, plan has {plan.num_nodes} nodes")
    K, L = plan.K, plan.levels
    high = []
    source = X
    for level in range(L + 1):
        for k in range(1, K + 1):
            high.append(plan.filter(k, level, source))
        source = plan.filter(0, level, source)
    data = np.stack([source] + high) if high else source[None]
    return FrameletCoefficients(K, L, data)


def fast_reconstruct(plan: FastTransformPlan, C: FrameletCoefficients, apply_mask: bool = True) -> np.ndarray:
    """Inverse of :func:`fast_decompose` by the backward recursion.

    Blocks dropped by ``plan.mask`` are zeroed first unless ``apply_mask`` is False.
    """
    K, L = plan.K, plan.levels
    if (C.K, C.levels) != (K, L) or C.num_nodes != plan.num_nodes:
        raise InputError("coefficients do not match the plan")
    data = C.data
    if apply_mask and not plan.mask.all():
        data = data * plan.mask[:, None, None]
    # canonical position of (k, l) for k >= 1 is 1 + l*K + (k-1)
    low = data[0]
    for level in range(L, -1, -1):
        acc = plan.filter(0, level, low)
        for k in range(1, K + 1):
            acc = acc + plan.filter(k, level, data[1 + level * K + (k - 1)])
        low = acc
    return low


# -- dense oracles and diagnostics ---------------------------------------------


def polynomial_spectra(lambdas: np.ndarray, plan: FastTransformPlan) -> np.ndarray:
    """Block multipliers with every ``g_k`` replaced by its interpolant."""
    s = plan.spec
    return chain_spectra(plan.cheb, lambdas, s.K, s.levels, s.coarsest_scale, s.dilation)


def polynomial_blocks(es: EigenSystem, plan: FastTransformPlan) -> TransformBlocks:
    """Dense ``U p(Lambda) U^T`` blocks matching what the recursion computes."""
    return blocks_from_spectra(es, polynomial_spectra(es.lambdas, plan), plan.K, plan.levels)


def roundtrip_response(lambdas, plan: FastTransformPlan, masked: bool = False) -> np.ndarray:
    """Scalar response of reconstruct(decompose(.)) at each eigenvalue."""
    spectra = polynomial_spectra(np.asarray(lambdas, dtype=float), plan)
    if masked:
        spectra = spectra * plan.mask[:, None]
    return np.sum(spectra ** 2, axis=0)


def partition_error(cheb: ChebFilter, grid_size: int = 1001) -> float:
    """``max |sum_k p_k(xi)^2 - 1|`` over a uniform grid of ``[0, pi]``."""
    grid = np.linspace(0.0, PI, grid_size)
    total = sum(cheb(k, grid) ** 2 for k in range(cheb.K + 1))
    return float(np.max(np.abs(total - 1.0)))


def fit_error(fam: ModulationFamily, k: int, degree: int, grid_size: int = 1001) -> float:
    """Max abs interpolation error of ``g_k`` on a uniform grid."""
    grid = np.linspace(0.0, PI, grid_size)
    coeffs = fit_chebyshev(fam, k, degree)
    return float(np.max(np.abs(cheb_eval(coeffs, grid) - evaluate(fam, k, grid))))


__all__ = [
    "ChebFilter",
    "FastTransformPlan",
    "apply_filter",
    "block_count",
    "CUTOFF_MODES",
    "cheb_eval",
    "chebyshev_points",
    "cutoff_mask",
    "fast_decompose",
    "fast_reconstruct",
    "fit_chebyshev",
    "fit_error",
    "fit_filter",
    "make_plan",
    "partition_error",
    "polynomial_blocks",
    "polynomial_spectra",
    "roundtrip_response",
]
