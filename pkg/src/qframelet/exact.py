"""Eigendecomposition-based quasi-framelet transform.

The stacked operator is ``W = [W_{0,L}; W_{1,0}..W_{K,0}; ...; W_{1,L}..W_{K,L}]``
with every block of the form ``U diag(c) U^T``. Block ``(k, l)`` multiplies
``g_k`` at scale ``l`` with the low-pass chain ``g_0`` of all finer scales.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

from .errors import CapabilityError, InputError
from .graph import NormalizedLaplacian
from .modulation import PI, ModulationFamily, evaluate

EXACT_EIGEN_MAX_NODES = 3000


@dataclass(frozen=True)
class EigenSystem:
    lambdas: np.ndarray
    U: np.ndarray = field(repr=False)

    @property
    def num_nodes(self) -> int:
        return self.lambdas.size


@dataclass(frozen=True)
class FrameletSpec:
    family: ModulationFamily
    levels: int
    coarsest_scale: int
    dilation: float = 2.0

    def __post_init__(self):
        if self.levels < 0:
            raise InputError(f"levels must be >= 0, got {self.levels}")
        if not self.dilation > 1:
            raise InputError(f"dilation must be > 1, got {self.dilation}")

    @property
    def K(self) -> int:
        return self.family.K

    @property
    def num_blocks(self) -> int:
        return block_count(self.K, self.levels)

    def scale(self, level: int) -> float:
        """Divisor applied to the Laplacian at ``level``."""
        return self.dilation ** (self.coarsest_scale + level)


def make_spec(family: ModulationFamily, levels: int, lambda_max: float, dilation: float = 2.0) -> FrameletSpec:
    return FrameletSpec(family, int(levels), coarsest_scale(lambda_max, dilation), float(dilation))


def coarsest_scale(lambda_max: float, dilation: float = 2.0) -> int:
    """Smallest integer m with ``dilation**-m * lambda_max <= pi``."""
    if lambda_max < 0:
        raise InputError("lambda_max must be non-negative")
    if not dilation > 1:
        raise InputError("dilation must be > 1")
    if lambda_max == 0:
        return 0
    m = math.ceil(math.log(lambda_max / PI) / math.log(dilation))
    # Guard against rounding in the logarithm.
    while dilation ** (-m) * lambda_max > PI:
        m += 1
    while dilation ** (-(m - 1)) * lambda_max <= PI:
        m -= 1
    return m


def block_count(K: int, levels: int) -> int:
    return 1 + K * (levels + 1)


def block_index(K: int, levels: int) -> list[tuple[int, int]]:
    """Canonical ``(k, level)`` order of the stacked transform."""
    return [(0, levels)] + [(k, l) for l in range(levels + 1) for k in range(1, K + 1)]


@dataclass
class FrameletCoefficients:
    """Coefficient blocks stacked as an array of shape ``(blocks, N, d)``."""

    K: int
    levels: int
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 3:
            raise InputError(f"coefficient data must be 3-d, got shape {self.data.shape}")
        if self.data.shape[0] != block_count(self.K, self.levels):
            raise InputError(
                f"expected {block_count(self.K, self.levels)} blocks, got {self.data.shape[0]}"
            )

    @property
    def index(self) -> list[tuple[int, int]]:
        return block_index(self.K, self.levels)

    def block(self, k: int, level: int) -> np.ndarray:
        return self.data[self.index.index((k, level))]

    @property
    def num_nodes(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


def eigendecompose(lap: NormalizedLaplacian, max_nodes: int = EXACT_EIGEN_MAX_NODES) -> EigenSystem:
    """Dense symmetric eigendecomposition with ascending eigenvalues."""
    n = lap.num_nodes
    if n > max_nodes:
        raise CapabilityError(
            f"{n} nodes exceeds the dense eigensolver limit of {max_nodes}; "
            "use the Chebyshev fast transform instead"
        )
    lambdas, U = np.linalg.eigh(lap.matrix.toarray())
    return EigenSystem(np.clip(lambdas, 0.0, 2.0), U)


def chain_spectra(
    func: Callable[[int, np.ndarray], np.ndarray],
    lambdas: np.ndarray,
    K: int,
    levels: int,
    coarsest: int,
    dilation: float,
) -> np.ndarray:
    """Per-eigenvalue multipliers of every block, shape ``(blocks, N)``.

    ``func(k, xi)`` is either a modulation function or its polynomial
    surrogate; the same chain structure is used for both.
    """
    lambdas = np.asarray(lambdas, dtype=float)
    rows = [None]
    low = np.ones_like(lambdas)
    for level in range(levels + 1):
        xi = lambdas / dilation ** (coarsest + level)
        for k in range(1, K + 1):
            rows.append(func(k, xi) * low)
        low = low * func(0, xi)
    rows[0] = low
    return np.stack(rows)


def transform_spectra(lambdas: np.ndarray, spec: FrameletSpec) -> np.ndarray:
    fam = spec.family
    return chain_spectra(
        lambda k, xi: evaluate(fam, k, xi) * np.ones_like(xi),
        lambdas, spec.K, spec.levels, spec.coarsest_scale, spec.dilation,
    )


@dataclass(frozen=True)
class TransformBlocks:
    """Dense ``W_{k,l}`` matrices in canonical order, shape ``(blocks, N, N)``."""

    K: int
    levels: int
    matrices: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return self.matrices.shape[0]

    def __iter__(self):
        return iter(self.matrices)

    def __getitem__(self, i):
        return self.matrices[i]

    @property
    def index(self) -> list[tuple[int, int]]:
        return block_index(self.K, self.levels)

    @property
    def num_nodes(self) -> int:
        return self.matrices.shape[1]

    def stacked(self) -> np.ndarray:
        """The tall operator ``W`` of shape ``(blocks*N, N)``."""
        b, n, _ = self.matrices.shape
        return self.matrices.reshape(b * n, n)


def blocks_from_spectra(es: EigenSystem, spectra: np.ndarray, K: int, levels: int) -> TransformBlocks:
    """``U diag(c_b) U^T`` for each row of ``spectra``."""
    U = es.U
    mats = np.stack([(U * c) @ U.T for c in spectra])
    # einsum is symmetric only up to rounding
    mats = 0.5 * (mats + mats.transpose(0, 2, 1))
    return TransformBlocks(K, levels, mats)


def build_transform_blocks(es: EigenSystem, spec: FrameletSpec) -> TransformBlocks:
    return blocks_from_spectra(es, transform_spectra(es.lambdas, spec), spec.K, spec.levels)


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return X[:, None] if X.ndim == 1 else X


def decompose_exact(blocks: TransformBlocks, X) -> FrameletCoefficients:
    """Coefficients ``W_{k,l} X`` for every block."""
    X = _as_matrix(X)
    if X.ndim != 2 or X.shape[0] != blocks.num_nodes:
        raise InputError(f"signal shape {X.shape} does not match {blocks.num_nodes} nodes")
    data = np.matmul(blocks.matrices, X)
    return FrameletCoefficients(blocks.K, blocks.levels, data)


def reconstruct_exact(blocks: TransformBlocks, C: FrameletCoefficients) -> np.ndarray:
    """``sum_b W_b^T C_b``; the inverse of :func:`decompose_exact`."""
    if (C.K, C.levels) != (blocks.K, blocks.levels) or C.num_nodes != blocks.num_nodes:
        raise InputError(
            f"coefficients (K={C.K}, L={C.levels}, N={C.num_nodes}) do not match "
            f"transform (K={blocks.K}, L={blocks.levels}, N={blocks.num_nodes})"
        )
    return np.matmul(blocks.matrices.transpose(0, 2, 1), C.data).sum(axis=0)


def framelet_atom(
    es: EigenSystem,
    spec: FrameletSpec,
    kind: Literal["low"] | str,
    level: int,
    node: int,
    chain: bool = True,
) -> np.ndarray:
    """Spatial framelet vector translated to ``node``.

    ``kind`` is ``"low"`` or ``"high-k"`` (e.g. ``"high-2"``). With
    ``chain=True`` the atom is row ``node`` of the transform block, so its
    inner product with a signal is that block's coefficient. ``chain=False``
    uses the single modulation value ``g_k(lambda / s^(m+level))``.
    """
    if kind == "low":
        k = 0
    elif kind.startswith("high-"):
        k = int(kind.split("-", 1)[1])
        if not 1 <= k <= spec.K:
            raise InputError(f"high-pass index {k} outside [1, {spec.K}]")
    else:
        raise InputError(f"unknown atom kind {kind!r}")
    if not 0 <= level <= spec.levels:
        raise InputError(f"level {level} outside [0, {spec.levels}]")
    if not 0 <= node < es.num_nodes:
        raise InputError(f"node {node} out of range")

    if chain:
        sub = FrameletSpec(spec.family, level, spec.coarsest_scale, spec.dilation)
        spectra = transform_spectra(es.lambdas, sub)
        row = 0 if k == 0 else block_index(spec.K, level).index((k, level))
        coef = spectra[row]
    else:
        xi = es.lambdas / spec.scale(level)
        coef = evaluate(spec.family, k, xi) * np.ones_like(xi)
    return es.U @ (coef * es.U[node])
