"""Square M-QAM with per-axis reflected Gray labelling.

Points live on the odd-integer grid {±1, ±3, ...}.  A symbol label packs the
in-phase Gray label in the high bits and the quadrature label in the low
bits; bits are read most-significant first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

SUPPORTED_ORDERS = (4, 16, 64, 256)


def gray_encode(i):
    return i ^ (i >> 1)


def gray_decode(g):
    g = np.asarray(g).copy()
    shift = g >> 1
    while np.any(shift):
        g ^= shift
        shift >>= 1
    return g


@dataclass(frozen=True, eq=False)
class QamConstellation:
    order: int
    points: np.ndarray  # indexed by integer label
    bits_per_symbol: int
    average_energy: float
    levels: np.ndarray  # per-axis amplitudes, ascending
    level_labels: np.ndarray  # Gray label of each entry of ``levels``

    @property
    def side(self) -> int:
        return len(self.levels)

    @property
    def bits_per_axis(self) -> int:
        return self.bits_per_symbol // 2

    @property
    def max_level(self) -> float:
        return float(self.levels[-1])

    def labels_to_bits(self, labels: np.ndarray) -> np.ndarray:
        labels = np.asarray(labels)
        shifts = np.arange(self.bits_per_symbol - 1, -1, -1)
        return ((labels[..., None] >> shifts) & 1).astype(np.uint8)

    def bits_to_labels(self, bits: np.ndarray) -> np.ndarray:
        weights = 1 << np.arange(self.bits_per_symbol - 1, -1, -1)
        return np.asarray(bits, dtype=np.int64) @ weights


@lru_cache(maxsize=None)
def qam_constellation(order: int) -> QamConstellation:
    """Build the Gray-labelled square constellation of the given order."""
    if order not in SUPPORTED_ORDERS:
        raise ValueError(f"unsupported QAM order {order}; choose from {SUPPORTED_ORDERS}")
    k = int(math.log2(order))
    side = 1 << (k // 2)
    idx = np.arange(side)
    levels = (2 * idx - (side - 1)).astype(float)
    level_labels = gray_encode(idx)
    # label -> level index along one axis
    axis_index = gray_decode(np.arange(side))
    labels = np.arange(order)
    i_lab, q_lab = labels >> (k // 2), labels & (side - 1)
    points = levels[axis_index[i_lab]] + 1j * levels[axis_index[q_lab]]
    points.flags.writeable = False
    return QamConstellation(
        order=order,
        points=points,
        bits_per_symbol=k,
        average_energy=float(np.mean(np.abs(points) ** 2)),
        levels=levels,
        level_labels=level_labels,
    )


def slice_axis(x: np.ndarray, const: QamConstellation) -> np.ndarray:
    """Index of the nearest per-axis level for real values ``x``.

    Exact midpoints go to the level with the smaller Gray label.
    """
    x = np.asarray(x, dtype=float)
    side = const.side
    t = (x + (side - 1)) / 2.0
    lo = np.clip(np.floor(t), 0, side - 1).astype(np.int64)
    hi = np.minimum(lo + 1, side - 1)
    d_lo = np.abs(t - lo)
    d_hi = np.abs(t - hi)
    lab = const.level_labels
    take_hi = (d_hi < d_lo) | ((d_hi == d_lo) & (lab[hi] < lab[lo]))
    return np.where(take_hi, hi, lo)


def nearest_labels(symbols, const: QamConstellation) -> np.ndarray:
    """Minimum-distance hard decision, returned as integer labels."""
    symbols = np.asarray(symbols)
    ii = slice_axis(symbols.real, const)
    qq = slice_axis(symbols.imag, const)
    h = const.bits_per_axis
    return (const.level_labels[ii] << h) | const.level_labels[qq]


def qam_modulate(bits, const: QamConstellation) -> np.ndarray:
    """Map a bit array (last axis) to constellation points."""
    bits = np.asarray(bits)
    k = const.bits_per_symbol
    if bits.shape[-1] % k:
        raise ValueError(f"bit count {bits.shape[-1]} is not a multiple of {k}")
    groups = bits.reshape(bits.shape[:-1] + (bits.shape[-1] // k, k))
    return const.points[const.bits_to_labels(groups)]


def qam_demodulate(symbols, const: QamConstellation) -> np.ndarray:
    """Hard-decision demodulation; output has ``log2(M)`` bits per input symbol."""
    symbols = np.asarray(symbols)
    bits = const.labels_to_bits(nearest_labels(symbols, const))
    return bits.reshape(symbols.shape[:-1] + (-1,)) if symbols.ndim else bits
