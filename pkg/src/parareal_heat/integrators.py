"""Coarse (implicit Euler) and fine (two-stage Radau IIA) one-slice propagators.

Both solve ``M y' = -nu(t) K y``.  A :class:`Propagator` is a pure function
of its inputs and may be called from many threads at once; it keeps a small
cache of block factorizations that never changes results.
"""

from __future__ import annotations

import enum
import math
import threading
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .fem import DiscreteSystem
from .sparse import SolverConfig, erf, factor_block2, solve_block2, solve_spd

__all__ = [
    "NuKind",
    "NuProfile",
    "Method",
    "Propagator",
    "nu_eval",
    "step_implicit_euler",
    "step_radau3",
    "propagate",
    "steps_in",
    "RADAU3_A",
    "RADAU3_C",
]

# two-stage Radau IIA, stiffly accurate
RADAU3_A = np.array([[5.0 / 12.0, -1.0 / 12.0], [3.0 / 4.0, 1.0 / 4.0]])
RADAU3_C = np.array([1.0 / 3.0, 1.0])

STEP_COUNT_RTOL = 1e-12


class NuKind(str, enum.Enum):
    CONSTANT = "constant"
    COSINE = "cosine"
    ERF = "erf"


@dataclass(frozen=True)
class NuProfile:
    """Time factor of the diffusion coefficient.

    constant: 1; cosine: (1 + cos(alpha*pi/2*t)) / 2;
    erf: (1 + erf(alpha*(t - 2))) / 2.
    """

    kind: NuKind = NuKind.CONSTANT
    alpha: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", NuKind(self.kind))
        if self.kind is not NuKind.CONSTANT and not self.alpha > 0.0:
            raise ValueError(f"alpha must be positive for the {self.kind.value} profile, got {self.alpha}")

    @property
    def is_constant(self) -> bool:
        return self.kind is NuKind.CONSTANT

    def __call__(self, t: float) -> float:
        if self.kind is NuKind.CONSTANT:
            return 1.0
        if self.kind is NuKind.COSINE:
            return 0.5 * (1.0 + math.cos(self.alpha * 0.5 * math.pi * t))
        return 0.5 * (1.0 + erf(self.alpha * (t - 2.0)))


def nu_eval(profile: NuProfile, t: float) -> float:
    return profile(t)


class Method(str, enum.Enum):
    IMPLICIT_EULER = "implicit_euler"
    RADAU_IIA3 = "radau_iia3"


def step_implicit_euler(y, t, dt, sys: DiscreteSystem, nu: NuProfile, cfg: SolverConfig | None = None):
    """One step of ``(M + dt*nu(t+dt)*K) y+ = M y``."""
    A = sys.mass.linear_combination(1.0, sys.stiffness, dt * nu(t + dt))
    return solve_spd(A, sys.mass @ y, cfg)


def _radau_blocks(sys: DiscreteSystem, dt: float, nu1: float, nu2: float):
    M, K = sys.mass, sys.stiffness
    a = RADAU3_A
    A11 = M.linear_combination(1.0, K, dt * a[0, 0] * nu1)
    A12 = K.scaled(dt * a[0, 1] * nu2)
    A21 = K.scaled(dt * a[1, 0] * nu1)
    A22 = M.linear_combination(1.0, K, dt * a[1, 1] * nu2)
    return A11, A12, A21, A22


def step_radau3(y, t, dt, sys: DiscreteSystem, nu: NuProfile, cfg: SolverConfig | None = None):
    """One Radau IIA(3) step; the output is the second stage."""
    nu1, nu2 = nu(t + RADAU3_C[0] * dt), nu(t + RADAU3_C[1] * dt)
    My = sys.mass @ y
    _, y_next = solve_block2(*_radau_blocks(sys, dt, nu1, nu2), My, My, cfg)
    return y_next


def steps_in(length: float, dt: float) -> int:
    """Integer number of ``dt`` steps in ``length``; raises if it is not one."""
    if not dt > 0.0:
        raise ConfigurationError(f"step size must be positive, got {dt}")
    ratio = length / dt
    n = round(ratio)
    if n < 1 or abs(ratio - n) > STEP_COUNT_RTOL * max(ratio, 1.0):
        raise ConfigurationError(f"interval length {length!r} is not an integer multiple of step {dt!r}")
    return n


@dataclass(eq=False)
class Propagator:
    """A configured one-slice integrator: method, step size, system and nu.

    With ``factorize=True`` (default) Radau steps reuse a cached LU of the
    stage matrix per distinct ``(nu1, nu2)`` pair; otherwise every step goes
    through :func:`step_radau3` and the iterative block solver.
    """

    method: Method
    dt: float
    system: DiscreteSystem
    nu: NuProfile = field(default_factory=NuProfile)
    solver: SolverConfig = field(default_factory=SolverConfig)
    cache_size: int = 8
    factorize: bool = True

    def __post_init__(self):
        self.method = Method(self.method)
        if not self.dt > 0.0:
            raise ConfigurationError(f"step size must be positive, got {self.dt}")
        self._factors: OrderedDict = OrderedDict()
        self._lock = threading.Lock()

    def _radau_factor(self, nu1: float, nu2: float):
        key = (nu1, nu2)
        with self._lock:
            fac = self._factors.get(key)
            if fac is not None:
                self._factors.move_to_end(key)
                return fac
        fac = factor_block2(*_radau_blocks(self.system, self.dt, nu1, nu2))
        with self._lock:
            self._factors[key] = fac
            while len(self._factors) > self.cache_size:
                self._factors.popitem(last=False)
        return fac

    def step(self, y: np.ndarray, t: float) -> np.ndarray:
        if self.method is Method.IMPLICIT_EULER:
            return step_implicit_euler(y, t, self.dt, self.system, self.nu, self.solver)
        if not self.factorize:
            return step_radau3(y, t, self.dt, self.system, self.nu, self.solver)
        nu1 = self.nu(t + RADAU3_C[0] * self.dt)
        nu2 = self.nu(t + RADAU3_C[1] * self.dt)
        My = self.system.mass @ y
        return self._radau_factor(nu1, nu2).solve(My, My)[1]

    def __call__(self, y: np.ndarray, t_start: float, t_end: float) -> np.ndarray:
        return propagate(self, y, t_start, t_end)


def propagate(spec: Propagator, y, t_start: float, t_end: float) -> np.ndarray:
    """Integrate from ``t_start`` to ``t_end`` in a whole number of steps."""
    if not t_end > t_start:
        raise ConfigurationError(f"t_end ({t_end}) must exceed t_start ({t_start})")
    n = steps_in(t_end - t_start, spec.dt)
    y = np.array(y, dtype=float, copy=True)
    for i in range(n):
        y = spec.step(y, t_start + i * spec.dt)
    return y
