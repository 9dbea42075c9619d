"""Experiment configurations, presets and the CSV/metadata writer."""

from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from ._accel import NUMBA_ENABLED
from .errors import ConfigurationError, PararealHeatError
from .fem import InitialCondition, StripCoefficients, assemble, project_initial_condition
from .integrators import Method, NuKind, NuProfile, Propagator, steps_in
from .mesh import StripGeometry, build_strip_mesh, mesh_width_stats, refine_uniform
from .parareal import PararealConfig, PararealState, TimeSlicePartition, run
from .spectral import IterationOperator, build_propagator_matrix, convergence_bound, estimate_sigma_max

__all__ = ["ExperimentConfig", "ExperimentResult", "PRESETS", "preset", "run_experiment", "load_config"]

log = logging.getLogger(__name__)


@dataclass
class ExperimentConfig:
    preset: str | None = None
    name: str | None = None
    w: float = 0.2
    x0: float | None = None
    a1: float = 0.01
    a2: float = 0.01
    a3: float = 0.01
    nu: str = "constant"
    alpha: float = 1.0
    T: float = 4.0
    N: int = 40
    coarse_method: str = "implicit_euler"
    coarse_dt: float = 0.01
    fine_method: str = "radau_iia3"
    fine_dt: float = 0.005
    target_h: float = 0.04
    refinements: int = 1
    max_iter: int = 12
    stop_defect: float | None = None
    out: str = "results"
    workers: int = 1
    estimate_sigma: bool = False
    sigma_tol: float = 1e-8

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"unknown config field(s): {', '.join(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    @property
    def jump(self) -> float:
        return self.a2 / self.a1

    @property
    def stem(self) -> str:
        prefix = self.preset or self.name or "custom"
        return f"{prefix}_w{self.w:g}_da{self.jump:g}_{self.nu}_alpha{self.alpha:g}_N{self.N}"

    def validate(self) -> None:
        """Check every parameter before any heavy work starts."""
        try:
            StripGeometry(self.w, self.x0)
            StripCoefficients(self.a1, self.a2, self.a3)
            NuProfile(NuKind(self.nu), self.alpha)
            Method(self.coarse_method)
            Method(self.fine_method)
            TimeSlicePartition(self.T, self.N)
        except ConfigurationError:
            raise
        except (PararealHeatError, ValueError) as exc:
            raise ConfigurationError(str(exc)) from None
        slice_length = self.T / self.N
        for label, dt in (("coarse_dt", self.coarse_dt), ("fine_dt", self.fine_dt)):
            try:
                steps_in(slice_length, dt)
            except ConfigurationError:
                raise ConfigurationError(
                    f"slice length T/N = {self.T}/{self.N} = {slice_length!r} is not a multiple of {label} = {dt!r}"
                ) from None
        if not self.target_h > 0.0:
            raise ConfigurationError(f"target_h must be positive, got {self.target_h}")
        if self.refinements < 0:
            raise ConfigurationError(f"refinements must be >= 0, got {self.refinements}")
        if self.max_iter < 0:
            raise ConfigurationError(f"max_iter must be >= 0, got {self.max_iter}")
        if self.workers < 1:
            raise ConfigurationError(f"workers must be >= 1, got {self.workers}")
        if self.estimate_sigma and NuKind(self.nu) is not NuKind.CONSTANT:
            raise ConfigurationError("sigma_max estimation requires the constant nu profile")


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: expected a flat JSON object")
    return ExperimentConfig.from_dict(data)


BASE_JUMPS = (1.0, 100.0, 10000.0)


def _fig1():
    return [
        ExperimentConfig(preset="fig1", w=w, a2=0.01 * da, target_h=0.04, refinements=1, max_iter=12)
        for w in (0.2, 0.02)
        for da in BASE_JUMPS
    ]


def _fig2():
    return [
        ExperimentConfig(preset="fig2", w=0.2, a2=1.0, nu=kind, alpha=alpha, target_h=0.04, refinements=1, max_iter=12)
        for alpha in (1.0, 10.0)
        for kind in ("constant", "cosine", "erf")
    ]


def _fig3():
    return [
        ExperimentConfig(
            preset="fig3", w=0.2, a2=0.01 * da, N=20, target_h=0.08, refinements=0, max_iter=10, estimate_sigma=True
        )
        for da in (1.0, 10000.0)
    ]


PRESETS = {"fig1": _fig1, "fig2": _fig2, "fig3": _fig3}


def preset(name: str) -> list[ExperimentConfig]:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigurationError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    state: PararealState
    csv_path: Path
    meta_path: Path
    h_min: float
    h_max: float
    dofs: int
    sigma_max: float | None = None
    sigma_converged: bool | None = None
    bound: np.ndarray | None = None
    error_2norm: np.ndarray | None = None
    wall_clock: float = 0.0
    extra: dict = field(default_factory=dict)


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def build_problem(cfg: ExperimentConfig):
    """Mesh, discrete system, initial vector and Parareal configuration for ``cfg``."""
    geom = StripGeometry(cfg.w, cfg.x0)
    mesh = build_strip_mesh(geom, cfg.target_h)
    for _ in range(cfg.refinements):
        mesh = refine_uniform(mesh)
    system = assemble(mesh, StripCoefficients(cfg.a1, cfg.a2, cfg.a3))
    b = project_initial_condition(mesh, InitialCondition(), system)
    nu = NuProfile(NuKind(cfg.nu), cfg.alpha)
    coarse = Propagator(Method(cfg.coarse_method), cfg.coarse_dt, system, nu)
    fine = Propagator(Method(cfg.fine_method), cfg.fine_dt, system, nu)
    pcfg = PararealConfig(
        TimeSlicePartition(cfg.T, cfg.N),
        coarse,
        fine,
        max_iter=cfg.max_iter,
        stop_defect=cfg.stop_defect,
        worker_count=cfg.workers,
    )
    return mesh, system, b, pcfg


def stacked_errors(state: PararealState) -> np.ndarray:
    """``||y_fine - y^k||_2`` over the whole stacked trajectory, per iteration."""
    return np.array([np.linalg.norm(state.fine_reference - y) for y in state.iterates])


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> ExperimentResult:
    """Run one configuration and write ``<stem>.csv`` and ``<stem>.meta.txt``."""
    cfg.validate()
    out = Path(out_dir if out_dir is not None else cfg.out)
    start = time.perf_counter()
    mesh, system, b, pcfg = build_problem(cfg)
    h_min, h_max = mesh_width_stats(mesh)
    log.info("%s: %d dofs, h in [%.4f, %.4f]", cfg.stem, system.d, h_min, h_max)

    sigma = None
    sigma_est = None
    if cfg.estimate_sigma:
        length = pcfg.partition.slice_length
        G = build_propagator_matrix(pcfg.coarse, length, cfg.workers)
        F = build_propagator_matrix(pcfg.fine, length, cfg.workers)
        sigma_est = estimate_sigma_max(IterationOperator(cfg.N, G, F), tol=cfg.sigma_tol)
        sigma = sigma_est.sigma
        log.info("%s: sigma_max = %.6f", cfg.stem, sigma)

    state = run(pcfg, b)
    wall = time.perf_counter() - start
    ks = np.arange(len(state.defects))
    bound = convergence_bound(sigma, state.defects[0], ks) if sigma is not None else None
    err2 = stacked_errors(state)

    try:
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / f"{cfg.stem}.csv"
        meta_path = out / f"{cfg.stem}.meta.txt"
        lines = ["k,defect,bound" if bound is not None else "k,defect"]
        for k, dk in zip(ks, state.defects):
            row = f"{k},{_fmt(dk)}"
            if bound is not None:
                row += f",{_fmt(bound[k])}"
            lines.append(row)
        csv_path.write_text("\n".join(lines) + "\n", encoding="ascii")

        meta = dict(cfg.to_dict())
        meta.update(
            x0_effective=StripGeometry(cfg.w, cfg.x0).x0,
            h_min=h_min,
            h_max=h_max,
            dofs=system.d,
            nodes=mesh.n_nodes,
            triangles=mesh.n_triangles,
            iterations=state.k,
            final_defect=state.defects[-1],
            error_2norm=" ".join(_fmt(e) for e in err2),
            wall_clock_seconds=round(wall, 3),
            worker_count=cfg.workers,
            numba=NUMBA_ENABLED,
            version=__version__,
        )
        if sigma_est is not None:
            meta.update(
                sigma_max=sigma,
                sigma_converged=sigma_est.converged,
                sigma_iterations=sigma_est.iterations,
                bound_2norm=" ".join(_fmt(v) for v in convergence_bound(sigma, err2[0], ks)),
            )
        meta_path.write_text("".join(f"{k} = {v}\n" for k, v in meta.items()), encoding="ascii")
    except OSError as exc:
        raise OSError(f"cannot write results to {out}: {exc.strerror or exc}") from exc

    return ExperimentResult(
        config=cfg,
        state=state,
        csv_path=csv_path,
        meta_path=meta_path,
        h_min=h_min,
        h_max=h_max,
        dofs=system.d,
        sigma_max=sigma,
        sigma_converged=None if sigma_est is None else sigma_est.converged,
        bound=bound,
        error_2norm=err2,
        wall_clock=wall,
    )
