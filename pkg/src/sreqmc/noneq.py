"""Non-equilibrium lambda protocol: side walkers, interval splitting, Jarzynski estimates."""
from __future__ import annotations

import concurrent.futures as cf
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, List, Optional, Sequence

import numpy as np

from .lattice import FiniteT, LatticeGeometry, ModelParams, RunMode, mode_to_dict
from .sse import engine
from .sse import kernels as K
from .tensors import ConnectionTensorKind

log = logging.getLogger(__name__)

DEFAULT_DLAMBDA = 1e-4
DEFAULT_SNAPSHOT_SPACING = 10


@dataclass(frozen=True)
class Schedule:
    """Uniform lambda grid from ``lambda_start`` to ``lambda_end``.

    ``endpoint_refinement`` splits the first and last ``refine_steps`` steps
    into ``refine_factor`` substeps each.
    """

    lambda_start: float = 0.0
    lambda_end: float = 1.0
    d_lambda: float = DEFAULT_DLAMBDA
    sweeps_per_step: int = 1
    endpoint_refinement: bool = False
    refine_steps: int = 10
    refine_factor: int = 10

    def __post_init__(self):
        if not 0.0 <= self.lambda_start < self.lambda_end <= 1.0:
            raise ValueError("need 0 <= lambda_start < lambda_end <= 1")
        if not self.d_lambda > 0:
            raise ValueError("d_lambda must be positive")
        steps = (self.lambda_end - self.lambda_start) / self.d_lambda
        if round(steps) < 1 or abs(steps - round(steps)) > 1e-6 * max(1.0, steps):
            raise ValueError("interval length must be a positive integer multiple of d_lambda")
        if self.sweeps_per_step < 1:
            raise ValueError("sweeps_per_step must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round((self.lambda_end - self.lambda_start) / self.d_lambda))

    def grid(self) -> np.ndarray:
        n = self.n_steps
        u = np.arange(n + 1) / n
        if self.endpoint_refinement and n > 2 * self.refine_steps:
            k, f = self.refine_steps, self.refine_factor
            head = np.linspace(0.0, u[k], k * f + 1)
            tail = np.linspace(u[n - k], 1.0, k * f + 1)
            u = np.concatenate([head, u[k + 1:n - k], tail])
        lam = self.lambda_start + (self.lambda_end - self.lambda_start) * u
        lam[0], lam[-1] = self.lambda_start, self.lambda_end
        return lam

    def split(self, k: int) -> List["Schedule"]:
        """``k`` consecutive equal intervals with the same step and sweep settings."""
        edges = np.linspace(self.lambda_start, self.lambda_end, k + 1)
        return [Schedule(float(a), float(b), self.d_lambda, self.sweeps_per_step,
                         self.endpoint_refinement, self.refine_steps, self.refine_factor)
                for a, b in zip(edges[:-1], edges[1:])]

    def to_dict(self) -> dict:
        return {"lambda_start": self.lambda_start, "lambda_end": self.lambda_end,
                "d_lambda": self.d_lambda, "sweeps_per_step": self.sweeps_per_step,
                "endpoint_refinement": self.endpoint_refinement}


@dataclass(frozen=True)
class PathResult:
    work: float
    abandoned: bool
    final_nb: int
    walker_seed: int
    interval_index: int = 0
    path_index: int = 0


@dataclass
class WorkEnsemble:
    results: List[PathResult]
    interval: Schedule
    meta: dict = field(default_factory=dict)

    def works(self) -> np.ndarray:
        """Work values of the non-abandoned paths."""
        return np.array([r.work for r in self.results if not r.abandoned], dtype=float)

    @property
    def abandoned_fraction(self) -> float:
        if not self.results:
            return 0.0
        return sum(r.abandoned for r in self.results) / len(self.results)


# ---------------------------------------------------------------------------
# single-walker operations


def topology_sweep(cfg: engine.ReplicaConfig, lam: float) -> engine.ReplicaConfig:
    """Connect/disconnect sweep over all sites at fixed lambda."""
    below = cfg.below()
    K.topology_sweep(float(lam), cfg.connected, below, cfg.above, int(cfg.kind), cfg.renyi_n, cfg.rng)
    return cfg


def side_walk(cfg: engine.ReplicaConfig, schedule: Schedule, walker_seed: Optional[int] = None) -> PathResult:
    """Drive ``cfg`` (mutated) along the schedule and return the accumulated work.

    ``walker_seed`` replaces the config's generator so that the path can be
    replayed from the same starting snapshot.
    """
    if walker_seed is not None:
        cfg.rng = np.random.default_rng(walker_seed)
    bonds, h, J, beta, finite, m = cfg.kernel_args()
    work, abandoned, nb, cfg.optype, cfg.opidx = K.side_walk_kernel(
        cfg.optype, cfg.opidx, cfg.nops, cfg.above, cfg.connected, bonds, h, J, beta, finite, m,
        int(cfg.kind), cfg.renyi_n, schedule.grid(), int(schedule.sweeps_per_step), cfg.rng)
    return PathResult(math.inf if abandoned else float(work), bool(abandoned), int(nb),
                      -1 if walker_seed is None else int(walker_seed))


# ---------------------------------------------------------------------------
# protocol


def derive_seed(run_seed: int, *key: int) -> int:
    """Stream rule: run seed -> (interval, role, index) -> u64 walker seed."""
    ss = np.random.SeedSequence([int(run_seed) & 0xFFFFFFFFFFFFFFFF, *[int(k) for k in key]])
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class ProtocolPlan:
    intervals: int = 1
    paths_per_interval: int = 640
    schedule: Schedule = Schedule()
    burn_in: Optional[int] = None  # default 10 * N sweeps
    snapshot_spacing: int = DEFAULT_SNAPSHOT_SPACING
    thermalize: int = engine.DEFAULT_THERMALIZE

    def burn_in_sweeps(self, n_sites: int) -> int:
        return 10 * n_sites if self.burn_in is None else int(self.burn_in)


@dataclass(frozen=True)
class _Task:
    interval_index: int
    path_index: int
    walker_seed: int
    arrays: tuple
    static: tuple
    grid: np.ndarray
    sweeps: int


def _run_task(task: _Task) -> PathResult:
    optype, opidx, nops, above, connected = (a.copy() for a in task.arrays)
    bonds, h, J, beta, finite, m, kind, renyi_n = task.static
    rng = np.random.default_rng(task.walker_seed)
    work, abandoned, nb, _, _ = K.side_walk_kernel(optype, opidx, nops, above, connected, bonds, h, J,
                                                   beta, finite, m, kind, renyi_n, task.grid,
                                                   task.sweeps, rng)
    return PathResult(math.inf if abandoned else float(work), bool(abandoned), int(nb), task.walker_seed,
                      task.interval_index, task.path_index)


def main_walker_snapshots(geometry: LatticeGeometry, params: ModelParams, mode: RunMode,
                          kind: ConnectionTensorKind, plan: ProtocolPlan, seed: int,
                          interval_index: int, interval: Schedule) -> Iterator[engine.ReplicaConfig]:
    """Equilibrated configurations at ``interval.lambda_start``, one per side walker.

    Replicas are first thermalised independently (B empty), then the coupled
    walker equilibrates at the interval's starting lambda and is sampled every
    ``snapshot_spacing`` sweeps.
    """
    rng = np.random.default_rng(derive_seed(seed, interval_index, 0))
    cfg = engine.init_config(geometry, params, mode, seed=rng, kind=kind, thermalize=plan.thermalize)
    engine.equilibrate(cfg, interval.lambda_start, plan.burn_in_sweeps(geometry.n_sites))
    for j in range(plan.paths_per_interval):
        if j:
            engine.equilibrate(cfg, interval.lambda_start, plan.snapshot_spacing)
        yield cfg


def _tasks(geometry, params, mode, kind, plan, seed, skip: Callable[[int, int], bool]) -> Iterator[_Task]:
    kind = ConnectionTensorKind(kind)
    for k, interval in enumerate(plan.schedule.split(plan.intervals)):
        grid = interval.grid()
        for j, cfg in enumerate(main_walker_snapshots(geometry, params, mode, kind, plan, seed, k, interval)):
            if skip(k, j):
                continue
            bonds, h, J, beta, finite, m = cfg.kernel_args()
            static = (bonds, h, J, beta, finite, m, int(kind), params.renyi_n)
            yield _Task(k, j, derive_seed(seed, k, 1, j), tuple(a.copy() for a in cfg.arrays()),
                        static, grid, interval.sweeps_per_step)


def iter_paths(geometry: LatticeGeometry, params: ModelParams, mode: RunMode, kind: ConnectionTensorKind,
               plan: ProtocolPlan, seed: int, workers: int = 1,
               skip: Callable[[int, int], bool] = lambda k, j: False) -> Iterator[PathResult]:
    """Path results in (interval, path) order, independent of ``workers``."""
    tasks = _tasks(geometry, params, mode, kind, plan, seed, skip)
    if workers <= 1:
        for t in tasks:
            yield _run_task(t)
        return
    with cf.ProcessPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(_run_task, tasks, chunksize=1)


def run_protocol(geometry: LatticeGeometry, params: ModelParams, mode: RunMode, n: Optional[int] = None,
                 plan: ProtocolPlan = ProtocolPlan(), seed: int = 0,
                 kind: ConnectionTensorKind = ConnectionTensorKind.SRE, workers: int = 1) -> List[WorkEnsemble]:
    """Run every interval of the plan and group the paths per interval."""
    if n is not None and n != params.renyi_n:
        params = ModelParams(params.J, params.h, int(n))
    if plan.intervals < 1:
        raise ValueError("need at least one interval")
    intervals = plan.schedule.split(plan.intervals)
    meta = {"geometry": geometry.to_dict(), "J": params.J, "h": params.h, "n": params.renyi_n,
            "mode": mode_to_dict(mode), "kind": ConnectionTensorKind(kind).name}
    ensembles = [WorkEnsemble([], iv, dict(meta, interval_index=k)) for k, iv in enumerate(intervals)]
    for res in iter_paths(geometry, params, mode, kind, plan, seed, workers):
        ensembles[res.interval_index].results.append(res)
    for k, ens in enumerate(ensembles):
        if ens.abandoned_fraction:
            log.info("interval %d: %.3f of paths abandoned", k, ens.abandoned_fraction)
    return ensembles


def replay_path(geometry, params, mode, kind, plan: ProtocolPlan, seed: int, interval_index: int,
                path_index: int) -> PathResult:
    """Recompute one recorded path from the run seed alone."""
    interval = plan.schedule.split(plan.intervals)[interval_index]
    single = ProtocolPlan(plan.intervals, path_index + 1, plan.schedule, plan.burn_in,
                          plan.snapshot_spacing, plan.thermalize)
    for j, cfg in enumerate(main_walker_snapshots(geometry, params, mode, ConnectionTensorKind(kind), single,
                                                  seed, interval_index, interval)):
        if j == path_index:
            res = side_walk(cfg.copy(), interval, derive_seed(seed, interval_index, 1, path_index))
            return PathResult(res.work, res.abandoned, res.final_nb, res.walker_seed, interval_index, path_index)
    raise IndexError(path_index)


# ---------------------------------------------------------------------------
# estimates


class AllPathsAbandoned(RuntimeError):
    pass


def _neg_log_mean_exp(w: np.ndarray) -> float:
    lo = w.min()
    return float(lo - np.log(np.mean(np.exp(-(w - lo)))))


def jarzynski_delta_f(works: Sequence[float]) -> tuple:
    """(Delta F, jackknife stderr) with Delta F = -ln mean exp(-W)."""
    w = np.asarray(works, dtype=float)
    if w.size < 2:
        raise ValueError("need at least two work values")
    lo = w.min()
    e = np.exp(-(w - lo))
    total = e.sum()
    n = w.size
    est = float(lo - np.log(total / n))
    loo = lo - np.log((total - e) / (n - 1))
    err = float(np.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2)))
    return est, err


@dataclass
class RenyiEstimate:
    value: float
    stderr: float
    diagnostics: dict


def estimate_renyi(ensembles: Sequence[WorkEnsemble], n: int) -> RenyiEstimate:
    """Renyi-type entropy from summed interval free-energy differences.

    M_n = -(sum_k Delta F_k) / (1 - n); interval errors add in quadrature.
    """
    dfs, errs, abandoned, counts = [], [], [], []
    for k, ens in enumerate(ensembles):
        w = ens.works()
        if w.size == 0:
            raise AllPathsAbandoned(f"interval {k} [{ens.interval.lambda_start}, {ens.interval.lambda_end}]"
                                    " has no completed paths")
        if w.size < 2:
            raise ValueError(f"interval {k} needs at least two completed paths")
        df, err = jarzynski_delta_f(w)
        dfs.append(df)
        errs.append(err)
        abandoned.append(ens.abandoned_fraction)
        counts.append(int(w.size))
    total = float(np.sum(dfs))
    value = -total / (1 - n)
    stderr = float(np.sqrt(np.sum(np.square(errs))) / abs(n - 1))
    diag = {"delta_f": dfs, "delta_f_stderr": errs, "abandoned_fraction": abandoned,
            "completed_paths": counts, "delta_f_total": total}
    return RenyiEstimate(value, stderr, diag)


def sre_tilde(m_n: float, s_n: float = 0.0) -> float:
    """Magic with the mixedness term removed (s_n = 0 for pure states)."""
    if not (math.isfinite(m_n) and math.isfinite(s_n)):
        raise ValueError("both terms must be finite")
    return m_n - s_n
