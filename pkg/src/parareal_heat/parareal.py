"""Parareal over equal time slices, fine propagations run on a thread pool."""

from __future__ import annotations

import logging
from concurrent.futures import Executor, ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, PararealHeatError
from .integrators import Propagator, steps_in

__all__ = [
    "TimeSlicePartition",
    "PararealConfig",
    "PararealState",
    "run_fine_serial",
    "initialize",
    "iterate",
    "defect",
    "run",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TimeSlicePartition:
    T: float
    N: int

    def __post_init__(self):
        if not self.T > 0.0:
            raise ConfigurationError(f"final time must be positive, got T={self.T}")
        if int(self.N) != self.N or self.N < 1:
            raise ConfigurationError(f"number of slices must be a positive integer, got N={self.N}")

    @property
    def slice_length(self) -> float:
        return self.T / self.N

    def t(self, n: int) -> float:
        return n * self.T / self.N

    @property
    def boundaries(self) -> np.ndarray:
        return np.array([self.t(n) for n in range(self.N + 1)])


@dataclass(eq=False)
class PararealConfig:
    partition: TimeSlicePartition
    coarse: Propagator
    fine: Propagator
    max_iter: int
    stop_defect: float | None = None
    worker_count: int = 1

    def __post_init__(self):
        length = self.partition.slice_length
        for label, prop in (("coarse", self.coarse), ("fine", self.fine)):
            try:
                steps_in(length, prop.dt)
            except ConfigurationError as exc:
                raise ConfigurationError(f"slice length T/N={length!r} vs {label} step dt={prop.dt!r}: {exc}") from None
        if self.coarse.system.d != self.fine.system.d:
            raise ConfigurationError("coarse and fine propagators act on different systems")
        if self.max_iter < 0:
            raise ConfigurationError(f"max_iter must be >= 0, got {self.max_iter}")
        if self.worker_count < 1:
            raise ConfigurationError(f"worker_count must be >= 1, got {self.worker_count}")


@dataclass(eq=False)
class PararealState:
    """History of a Parareal run.

    ``iterates[k]`` is an ``(N + 1, d)`` array holding ``y^k_0 .. y^k_N``;
    ``coarse_values`` holds ``G(y^k_n)`` for the latest ``k`` so the next
    sweep can reuse it.
    """

    fine_reference: np.ndarray
    iterates: list[np.ndarray] = field(default_factory=list)
    defects: list[float] = field(default_factory=list)
    coarse_values: np.ndarray | None = None
    error: BaseException | None = None

    @property
    def k(self) -> int:
        return len(self.iterates) - 1

    @property
    def latest(self) -> np.ndarray:
        return self.iterates[-1]


def _slice_bounds(cfg: PararealConfig, n: int) -> tuple[float, float]:
    return cfg.partition.t(n), cfg.partition.t(n + 1)


def run_fine_serial(cfg: PararealConfig, b: np.ndarray) -> np.ndarray:
    """Sequential fine trajectory ``y_{n+1} = F(y_n)``, shape ``(N + 1, d)``."""
    N = cfg.partition.N
    out = np.empty((N + 1, np.size(b)))
    out[0] = b
    for n in range(N):
        out[n + 1] = cfg.fine(out[n], *_slice_bounds(cfg, n))
    return out


def _coarse_sweep(cfg: PararealConfig, b, fine_values=None, coarse_old=None):
    N = cfg.partition.N
    y = np.empty((N + 1, np.size(b)))
    g = np.empty((N, np.size(b)))
    y[0] = b
    for n in range(N):
        g[n] = cfg.coarse(y[n], *_slice_bounds(cfg, n))
        if fine_values is None:
            y[n + 1] = g[n]
        else:
            y[n + 1] = g[n] + (fine_values[n] - coarse_old[n])
    return y, g


def defect(state: PararealState, k: int) -> float:
    """Largest max-norm gap between iterate ``k`` and the fine trajectory."""
    return float(np.max(np.abs(state.fine_reference - state.iterates[k])))


def initialize(cfg: PararealConfig, b, fine_reference: np.ndarray | None = None) -> PararealState:
    """Iterate 0 from a serial coarse sweep, plus the fine reference for defects."""
    b = np.asarray(b, dtype=float)
    ref = run_fine_serial(cfg, b) if fine_reference is None else fine_reference
    y0, g0 = _coarse_sweep(cfg, b)
    state = PararealState(fine_reference=ref, iterates=[y0], coarse_values=g0)
    state.defects.append(defect(state, 0))
    return state


@contextmanager
def _pool(worker_count: int):
    if worker_count <= 1:
        yield None
    else:
        with ThreadPoolExecutor(max_workers=worker_count, thread_name_prefix="slice") as ex:
            yield ex


def _fine_all(cfg: PararealConfig, y: np.ndarray, executor: Executor | None) -> np.ndarray:
    N = cfg.partition.N
    jobs = [(y[n], *_slice_bounds(cfg, n)) for n in range(N)]
    if executor is None:
        results = [cfg.fine(*job) for job in jobs]
    else:
        results = list(executor.map(lambda job: cfg.fine(*job), jobs))
    return np.array(results)


def iterate(cfg: PararealConfig, state: PararealState, executor: Executor | None = None) -> PararealState:
    """Advance ``state`` by one Parareal iteration (in place) and return it.

    Fine propagations of every slice run concurrently on ``executor``; the
    coarse correction sweep is serial in ``n``.  Results do not depend on
    the executor.
    """
    y = state.latest
    fine_values = _fine_all(cfg, y, executor)
    y_new, g_new = _coarse_sweep(cfg, y[0], fine_values, state.coarse_values)
    state.iterates.append(y_new)
    state.coarse_values = g_new
    state.defects.append(defect(state, state.k))
    return state


def run(cfg: PararealConfig, b, fine_reference: np.ndarray | None = None) -> PararealState:
    """Initialize, then iterate until ``max_iter`` or ``stop_defect`` is reached.

    If a solver fails mid-run the partial history is kept: the exception is
    re-raised with the state attached as ``exc.state``.
    """
    state = initialize(cfg, b, fine_reference)
    with _pool(cfg.worker_count) as executor:
        while state.k < cfg.max_iter:
            if cfg.stop_defect is not None and state.defects[-1] <= cfg.stop_defect:
                break
            try:
                iterate(cfg, state, executor)
            except PararealHeatError as exc:
                state.error = exc
                exc.state = state
                raise
            log.debug("iteration %d: defect %.3e", state.k, state.defects[-1])
    return state
