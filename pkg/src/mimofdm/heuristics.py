"""Particle swarm and differential evolution detectors.

Both search the continuous box ``[-b, b]^N_dim`` of the real-valued model
``y = H zeta + n`` and quantize the best vector per real axis at the end.
Every routine is batched: ``rd.H`` may carry leading batch dimensions
(typically subcarriers) and each batch entry runs an independent
population, cold-started.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .detectors import DetectorResult, RealDecomposition, _result, fitness, quantize_real, unstack_real
from .qam import QamConstellation, qam_constellation
from .rng import as_generator


class StabilityWarning(UserWarning):
    """Parameter choice outside the usual convergence heuristics."""


# tuned values per antenna correlation index
TUNED_PSO = {0.0: dict(c2=1.0, w0=1.5), 0.5: dict(c2=0.5, w0=1.5), 0.9: dict(c2=1.0, w0=3.5)}
TUNED_DE = {0.0: dict(f_cr=0.6, f_mut=0.6), 0.5: dict(f_cr=0.6, f_mut=0.8), 0.9: dict(f_cr=0.8, f_mut=1.8)}


def _nearest_key(table, rho):
    return min(table, key=lambda k: (abs(k - rho), k))


@dataclass(frozen=True)
class PsoParams:
    """Swarm settings.

    ``search_bound`` is the half-width of the search box; ``None`` uses the
    outermost constellation level (1 for 4-QAM).
    """

    n_pop: int = 40
    n_iter: int = 100
    c1: float = 4.0
    c2: float = 1.0
    w0: float = 1.5
    inertia_decay: float = 0.99
    v_max: float = 1.0
    search_bound: float | None = None

    def __post_init__(self):
        if self.n_pop < 1 or self.n_iter < 1:
            raise ValueError("n_pop and n_iter must be at least 1")
        if not self.v_max > 0:
            raise ValueError("v_max must be positive")
        if self.search_bound is not None and not (np.isfinite(self.search_bound) and self.search_bound > 0):
            raise ValueError("search_bound must be finite and positive")
        if self.c1 < 0 or self.c2 < 0:
            raise ValueError("acceleration factors must be non-negative")
        if self.c1 + self.c2 > 4:
            warnings.warn(
                f"c1 + c2 = {self.c1 + self.c2:g} exceeds 4; the swarm may not settle", StabilityWarning, stacklevel=3
            )


@dataclass(frozen=True)
class DeParams:
    n_ind: int = 40
    n_gen: int = 100
    f_mut: float = 0.6
    f_cr: float = 0.6
    search_bound: float | None = None

    def __post_init__(self):
        if self.n_ind < 4:
            raise ValueError(f"n_ind must be at least 4 for distinct donor indices, got {self.n_ind}")
        if self.n_gen < 1:
            raise ValueError("n_gen must be at least 1")
        if not 0 <= self.f_mut <= 2:
            raise ValueError(f"f_mut must lie in [0, 2], got {self.f_mut}")
        if not 0 <= self.f_cr <= 1:
            raise ValueError(f"f_cr must lie in [0, 1], got {self.f_cr}")
        if self.search_bound is not None and not (np.isfinite(self.search_bound) and self.search_bound > 0):
            raise ValueError("search_bound must be finite and positive")


def tuned_pso_params(rho: float, **overrides) -> PsoParams:
    """Calibrated swarm settings for the nearest tabulated correlation."""
    base = dict(TUNED_PSO[_nearest_key(TUNED_PSO, rho)])
    base.update(overrides)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", StabilityWarning)
        return PsoParams(**base)


def tuned_de_params(rho: float, **overrides) -> DeParams:
    base = dict(TUNED_DE[_nearest_key(TUNED_DE, rho)])
    base.update(overrides)
    return DeParams(**base)


@dataclass
class PsoState:
    P: np.ndarray  # (B, D, Np)
    V: np.ndarray
    M_pb: np.ndarray
    pb_fitness: np.ndarray  # (B, Np)
    p_gb: np.ndarray  # (B, D)
    gb_fitness: np.ndarray  # (B,)
    w: float


@dataclass
class ConvergenceTrace:
    best_fitness: np.ndarray  # (..., iterations)
    iterations_to_plateau: np.ndarray | int | None = None
    extra: dict = field(default_factory=dict)

    def to_rows(self, index=()):
        """(iteration, best_fitness) rows for one batch entry."""
        f = self.best_fitness[index] if index != () else self.best_fitness
        f = np.asarray(f)
        if f.ndim != 1:
            raise ValueError("select a single batch entry to export")
        return [(i + 1, float(v)) for i, v in enumerate(f)]


def convergence_profile(trace, tolerance: float = 0.01):
    """First (1-based) iteration after which the best fitness stays within
    ``tolerance`` (relative) of its final value.

    Accepts a :class:`ConvergenceTrace` or an array whose last axis is the
    iteration axis; batched input returns an integer array.
    """
    f = np.asarray(trace.best_fitness if isinstance(trace, ConvergenceTrace) else trace, dtype=float)
    if f.shape[-1] == 0:
        raise ValueError("trace must be nonempty")
    final = f[..., -1:]
    close = (f - final) <= tolerance * np.abs(f)
    # last iteration that is still far from the end, +1, then 1-based
    far = ~close
    n = f.shape[-1]
    last_far = np.where(far.any(axis=-1), n - 1 - np.argmax(far[..., ::-1], axis=-1), -1)
    out = last_far + 2
    return int(out) if np.ndim(out) == 0 else out


def _flatten(rd: RealDecomposition):
    batch = rd.y.shape[:-1]
    H = rd.H.reshape((-1,) + rd.H.shape[-2:])
    y = rd.y.reshape(-1, rd.y.shape[-1])
    return batch, RealDecomposition(H, y)


def _bound(search_bound, const):
    return float(const.max_level if search_bound is None else search_bound)


def _finish(best, batch, const, trace, **meta):
    d = best.shape[-1]
    q = quantize_real(best, const).reshape(batch + (d,))
    res = _result(unstack_real(q), const, **meta)
    f = trace.reshape(batch + (trace.shape[-1],))
    return res, ConvergenceTrace(f, convergence_profile(f))


def pso_detect(rd: RealDecomposition, params: PsoParams, seed=None,
               constellation: QamConstellation | None = None, observer=None):
    """Particle swarm detection.

    Parameters
    ----------
    rd : RealDecomposition
        Real model, possibly batched.
    params : PsoParams
    seed : int, Generator or None
    constellation : QamConstellation, optional
        Symbol alphabet used for the search box and output quantization
        (default 4-QAM).
    observer : callable, optional
        Called as ``observer(iteration, state)`` after initialization
        (iteration 0) and after every iteration.

    Returns
    -------
    (DetectorResult, ConvergenceTrace)
    """
    const = constellation or qam_constellation(4)
    rng = as_generator(seed)
    batch, rd = _flatten(rd)
    b, dim, npop = rd.y.shape[0], rd.n_dim, params.n_pop
    lim = _bound(params.search_bound, const)

    P = rng.uniform(-lim, lim, size=(b, dim, npop))
    V = np.zeros_like(P)
    f = fitness(P, rd)
    rows = np.arange(b)
    g = np.argmin(f, axis=1)
    st = PsoState(P, V, P.copy(), f, P[rows, :, g], f[rows, g], params.w0)
    if observer:
        observer(0, st)
    trace = np.empty((b, params.n_iter))
    for it in range(params.n_iter):
        u1 = rng.random(P.shape)
        u2 = rng.random(P.shape)
        V = st.w * V + params.c1 * u1 * (st.M_pb - P) + params.c2 * u2 * (st.p_gb[:, :, None] - P)
        np.clip(V, -params.v_max, params.v_max, out=V)
        P = np.clip(P + V, -lim, lim)
        f = fitness(P, rd)
        better = f < st.pb_fitness
        st.M_pb = np.where(better[:, None, :], P, st.M_pb)
        st.pb_fitness = np.where(better, f, st.pb_fitness)
        g = np.argmin(st.pb_fitness, axis=1)
        st.p_gb = st.M_pb[rows, :, g]
        st.gb_fitness = st.pb_fitness[rows, g]
        st.P, st.V = P, V
        st.w *= params.inertia_decay
        trace[:, it] = st.gb_fitness
        if observer:
            observer(it + 1, st)
    return _finish(st.p_gb, batch, const, trace, fitness=st.gb_fitness.reshape(batch), soft=st.p_gb, state=st)


def _donor_indices(rng, b, n):
    """r1, r2, r3 per individual, mutually distinct and distinct from k."""
    k = np.arange(n)
    r = rng.integers(0, n, size=(3, b, n))
    while True:
        bad = ((r[0] == k) | (r[1] == k) | (r[2] == k)
               | (r[0] == r[1]) | (r[0] == r[2]) | (r[1] == r[2]))
        count = int(bad.sum())
        if not count:
            return r
        r[:, bad] = rng.integers(0, n, size=(3, count))


def de_detect(rd: RealDecomposition, params: DeParams, seed=None,
              constellation: QamConstellation | None = None, observer=None):
    """Differential evolution (rand/1/bin) detection.

    ``observer(generation, population, trial)`` sees every evaluated
    candidate set; ``trial`` is ``None`` for the initial population.

    Returns
    -------
    (DetectorResult, ConvergenceTrace)
    """
    const = constellation or qam_constellation(4)
    rng = as_generator(seed)
    batch, rd = _flatten(rd)
    b, dim, n = rd.y.shape[0], rd.n_dim, params.n_ind
    if not 5 * dim <= n <= 10 * dim:
        warnings.warn(f"n_ind = {n} is outside the usual range [{5 * dim}, {10 * dim}]", StabilityWarning, stacklevel=2)
    lim = _bound(params.search_bound, const)

    X = rng.uniform(-lim, lim, size=(b, dim, n))
    f = fitness(X, rd)
    if observer:
        observer(0, X, None)
    rows = np.arange(b)[:, None, None]
    cols = np.arange(dim)[None, :, None]
    trace = np.empty((b, params.n_gen))
    for gen in range(params.n_gen):
        r = _donor_indices(rng, b, n)
        base = X[rows, cols, r[0][:, None, :]]
        mutant = base + params.f_mut * (X[rows, cols, r[1][:, None, :]] - X[rows, cols, r[2][:, None, :]])
        forced = rng.integers(0, dim, size=(b, n))
        take = rng.random((b, dim, n)) <= params.f_cr
        take |= np.arange(dim)[None, :, None] == forced[:, None, :]
        trial = np.clip(np.where(take, mutant, X), -lim, lim)
        ft = fitness(trial, rd)
        if observer:
            observer(gen + 1, X, trial)
        keep = ft < f
        X = np.where(keep[:, None, :], trial, X)
        f = np.where(keep, ft, f)
        trace[:, gen] = f.min(axis=1)
    best = X[np.arange(b), :, np.argmin(f, axis=1)]
    return _finish(best, batch, const, trace, fitness=f.min(axis=1).reshape(batch), soft=best)
