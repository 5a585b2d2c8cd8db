"""Per-subcarrier MIMO detection: exhaustive ML, zero forcing and MMSE.

All detectors accept batched observations: ``y`` has shape ``(..., Nr)``
and ``H`` has shape ``(..., Nr, Nt)``.  ``H`` is the *effective* channel
seen by unit-grid constellation symbols, i.e. it already includes the
``1/sqrt(Nt)`` equal-power split, so ``noise_ratio = sigma^2 / E_s``
(per-antenna energy after the split is folded into ``H``).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .qam import QamConstellation, nearest_labels, slice_axis
from .rng import as_generator

ML_BUDGET = 2**24
SINGULAR_CONDITION = 1e12


class DetectorBudgetError(ValueError):
    """Raised when exhaustive search would exceed the enumeration budget."""


@dataclass
class MimoObservation:
    y: np.ndarray
    H: np.ndarray
    noise_ratio: float
    constellation: QamConstellation

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=complex)
        self.H = np.asarray(self.H, dtype=complex)
        if self.H.shape[:-1] != self.y.shape:
            raise ValueError(f"H shape {self.H.shape} does not match y shape {self.y.shape}")
        if self.noise_ratio < 0:
            raise ValueError("noise_ratio must be non-negative")

    @property
    def nt(self) -> int:
        return self.H.shape[-1]

    @property
    def nr(self) -> int:
        return self.H.shape[-2]


@dataclass
class RealDecomposition:
    H: np.ndarray  # (..., 2Nr, 2Nt)
    y: np.ndarray  # (..., 2Nr)

    @property
    def n_dim(self) -> int:
        return self.H.shape[-1]


@dataclass
class DetectorResult:
    x_hat: np.ndarray
    hard_bits: np.ndarray
    metadata: dict = field(default_factory=dict)


def stack_real(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    return np.concatenate([x.real, x.imag], axis=-1)


def unstack_real(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v)
    half = v.shape[-1] // 2
    return v[..., :half] + 1j * v[..., half:]


def real_decompose(obs: MimoObservation) -> RealDecomposition:
    """Equivalent real model ``[[Re H, -Im H], [Im H, Re H]]``."""
    hr, hi = obs.H.real, obs.H.imag
    top = np.concatenate([hr, -hi], axis=-1)
    bottom = np.concatenate([hi, hr], axis=-1)
    return RealDecomposition(np.concatenate([top, bottom], axis=-2), stack_real(obs.y))


def fitness(zeta, rd: RealDecomposition) -> np.ndarray:
    """Squared residual ``||y - H zeta||^2``.

    ``zeta`` may carry extra trailing population columns: shape
    ``(..., N_dim)`` or ``(..., N_dim, P)``.
    """
    zeta = np.asarray(zeta, dtype=float)
    if zeta.shape[-1] == rd.n_dim and zeta.ndim == rd.y.ndim:
        r = rd.y - np.einsum("...ij,...j->...i", rd.H, zeta)
        return np.sum(r * r, axis=-1)
    r = rd.y[..., :, None] - rd.H @ zeta
    return np.sum(r * r, axis=-2)


def quantize_to_constellation(x_soft, const: QamConstellation) -> np.ndarray:
    """Nearest constellation point per entry (ties to the smaller label)."""
    return const.points[nearest_labels(x_soft, const)]


def quantize_real(v, const: QamConstellation) -> np.ndarray:
    """Nearest per-axis level for each real coordinate."""
    return const.levels[slice_axis(v, const)]


def _result(x_hat, const, **meta) -> DetectorResult:
    bits = const.labels_to_bits(nearest_labels(x_hat, const))
    return DetectorResult(x_hat, bits.reshape(bits.shape[:-2] + (-1,)), meta)


def ml_candidates(const: QamConstellation, nt: int) -> np.ndarray:
    """All symbol vectors in lexicographic label order, shape (M**Nt, Nt)."""
    return np.array(list(itertools.product(const.points, repeat=nt)), dtype=complex).reshape(-1, nt)


def detect_ml(obs: MimoObservation, chunk: int = 2**20) -> DetectorResult:
    """Exhaustive minimum-distance search.

    Ties resolve to the first candidate in lexicographic label order.
    """
    const = obs.constellation
    count = const.order**obs.nt
    if count > ML_BUDGET:
        raise DetectorBudgetError(
            f"ML search over {const.order}^{obs.nt} = {count} candidates exceeds the budget of "
            f"{ML_BUDGET}; use a heuristic detector (pso or de) instead"
        )
    cands = ml_candidates(const, obs.nt)  # (K, Nt)
    y = obs.y.reshape(-1, obs.nr)
    H = obs.H.reshape(-1, obs.nr, obs.nt)
    best = np.full(len(y), np.inf)
    best_idx = np.zeros(len(y), dtype=np.int64)
    per_block = max(1, chunk // (obs.nr * len(y) or 1))
    for lo in range(0, count, per_block):
        c = cands[lo:lo + per_block]
        recon = H @ c.T  # (B, Nr, k)
        diff = y[:, :, None] - recon
        d = np.sum(diff.real**2 + diff.imag**2, axis=1)
        i = np.argmin(d, axis=1)
        dmin = d[np.arange(len(y)), i]
        better = dmin < best
        best[better] = dmin[better]
        best_idx[better] = lo + i[better]
    x_hat = cands[best_idx].reshape(obs.y.shape[:-1] + (obs.nt,))
    return _result(x_hat, const, metric=best.reshape(obs.y.shape[:-1]), candidates=count)


def _gram_solve(H, y, reg):
    """Solve ``(H^H H + reg I) x = H^H y`` per batch entry."""
    hh = np.conj(np.swapaxes(H, -1, -2))
    gram = hh @ H
    if reg:
        gram = gram + reg * np.eye(H.shape[-1])
    rhs = np.einsum("...ij,...j->...i", hh, y)
    return np.linalg.solve(gram, rhs[..., None])[..., 0], gram


def zf_soft(obs: MimoObservation):
    """Unquantised ZF estimate and the per-entry singular mask."""
    cond = np.linalg.cond(obs.H)
    singular = ~(cond < SINGULAR_CONDITION)
    H = np.where(singular[..., None, None], np.eye(obs.nr, obs.nt), obs.H)
    x, _ = _gram_solve(H, obs.y, 0.0)
    return x, singular


def detect_zf(obs: MimoObservation, seed=None) -> DetectorResult:
    """Moore-Penrose (zero-forcing) detection.

    Channels with condition number above 1e12 are flagged singular and their
    symbols are drawn uniformly at random from the constellation.
    """
    x, singular = zf_soft(obs)
    const = obs.constellation
    x_hat = quantize_to_constellation(x, const)
    if np.any(singular):
        rng = as_generator(seed)
        rand = const.points[rng.integers(0, const.order, size=x_hat.shape)]
        x_hat = np.where(singular[..., None], rand, x_hat)
    return _result(x_hat, const, singular=singular, soft=x)


def mmse_soft(obs: MimoObservation) -> np.ndarray:
    x, _ = _gram_solve(obs.H, obs.y, obs.noise_ratio)
    return x


def detect_mmse(obs: MimoObservation, seed=None) -> DetectorResult:
    """Linear MMSE detection with regulariser ``noise_ratio``.

    A zero noise ratio reduces to the zero-forcing receiver.
    """
    if obs.noise_ratio == 0:
        return detect_zf(obs, seed)
    x = mmse_soft(obs)
    return _result(quantize_to_constellation(x, obs.constellation), obs.constellation, soft=x)
