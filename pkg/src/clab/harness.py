"""Experiment orchestration: convergence studies and parameter sweeps.

Ties the other modules together for the two scaling questions worth
checking at desk scale:

* finite-horizon convergence -- how far a finite-N sample path strays from
  the fluid solution over a fixed window, as N grows;
* steady-state concentration -- how close the long-run simulated mean sits
  to the fluid fixed point, as N grows.

Sweeps emit flat ``ResultRecord`` rows (one quantity per row) so any external
tool can plot them; no rendering happens here.  Grid cells run on a bounded
thread pool (the chain kernels release the GIL); records carry their full
coordinates, so aggregation is order-independent and the emitted ordering is
a deterministic sort.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

from .errors import InvalidInputError
from .fluid import IntegratorConfig, integrate, settle_to_invariant
from .invariant import (
    CASE_P_ZERO,
    classify_case,
    critical_index,
    mean_queue_length,
    scaling_target,
)
from .simulator import SimConfig, run_chain, steady_state_estimate, subseed
from .state import AggregateProfile, Params, path_distance

OUTPUT_KINDS = ("invariant", "fluid", "simulation", "deviation")

# quantity names emitted per requested output kind
KIND_QUANTITIES = {
    "invariant": ("invariant_mean", "critical_index", "scaling_target"),
    "fluid": ("fluid_mean",),
    "simulation": ("sim_mean",),
    "deviation": ("deviation",),
}

ENV_THREADS = "CLAB_THREADS"


@dataclass(frozen=True)
class SweepSpec:
    """Cross-product experiment description.

    Protocol fields default to the full measurement protocol; shrink them for
    quick scans.  ``horizon`` applies to the deviation and fluid outputs.
    """

    p_values: tuple[float, ...]
    lambda_values: tuple[float, ...]
    n_values: tuple[int, ...]
    replications: int
    base_seed: int
    outputs: tuple[str, ...]
    horizon: float = 10.0
    burn_in_steps: int = 1_000_000
    n_samples: int = 500_000
    sample_spacing: int = 20
    settle_tol: float = 1e-4

    def __post_init__(self):
        object.__setattr__(self, "p_values", tuple(float(x) for x in self.p_values))
        object.__setattr__(self, "lambda_values", tuple(float(x) for x in self.lambda_values))
        object.__setattr__(self, "n_values", tuple(int(x) for x in self.n_values))
        object.__setattr__(self, "outputs", tuple(dict.fromkeys(self.outputs)))
        if not self.p_values or not self.lambda_values or not self.n_values:
            raise InvalidInputError("value grids must be nonempty")
        if self.replications < 1:
            raise InvalidInputError("replications must be >= 1")
        for kind in self.outputs:
            if kind not in OUTPUT_KINDS:
                raise InvalidInputError(f"unknown output kind {kind!r}")

    @classmethod
    def from_json(cls, text: str) -> "SweepSpec":
        data = json.loads(text)
        try:
            return cls(
                p_values=tuple(data["p_values"]),
                lambda_values=tuple(data["lambda_values"]),
                n_values=tuple(data["n_values"]),
                replications=int(data["replications"]),
                base_seed=int(data["base_seed"]),
                outputs=tuple(data["outputs"]),
                **{k: data[k] for k in ("horizon", "burn_in_steps", "n_samples",
                                        "sample_spacing", "settle_tol") if k in data},
            )
        except KeyError as exc:
            raise InvalidInputError(f"sweep spec missing field {exc}") from exc

    def to_json(self) -> str:
        return json.dumps({
            "p_values": list(self.p_values),
            "lambda_values": list(self.lambda_values),
            "n_values": list(self.n_values),
            "replications": self.replications,
            "base_seed": self.base_seed,
            "outputs": list(self.outputs),
            "horizon": self.horizon,
            "burn_in_steps": self.burn_in_steps,
            "n_samples": self.n_samples,
            "sample_spacing": self.sample_spacing,
            "settle_tol": self.settle_tol,
        }, indent=2)

    def expected_quantities(self) -> int:
        return sum(len(KIND_QUANTITIES[k]) for k in self.outputs)


@dataclass(frozen=True)
class ResultRecord:
    """One measured quantity at one grid cell and replication."""

    p: float
    lam: float
    n: int
    seed: int
    quantity: str
    value: float
    ue: float | None = None
    le: float | None = None

    def csv_row(self) -> str:
        def fmt(x):
            return "" if x is None else repr(float(x))

        return f"{self.p!r},{self.lam!r},{self.n},{self.seed},{self.quantity},{fmt(self.value)},{fmt(self.ue)},{fmt(self.le)}"


CSV_HEADER = "p,lambda,n,seed,quantity,value,ue,le"


def finite_horizon_deviation(params: Params, n: int, horizon: float, seed: int,
                             dt: float = 1e-3, mode: str = "queue_level") -> float:
    """Sup distance between one simulated path and the fluid solution, from empty.

    The chain runs for ``round(n * (1 + lam) * horizon)`` events time-stamped
    on the deterministic grid ``k / (n * (1 + lam))``; the fluid side is
    integrated from the empty profile on the same horizon.
    """
    sim_params = replace(params, n_stations=n)
    n_events = max(1, round(n * (1.0 + params.lam) * horizon))
    cfg = SimConfig(params=sim_params, seed=seed, mode=mode)
    sim_traj, _ = run_chain(cfg, n_events)
    fluid_cfg = _fluid_config(params, horizon, dt)
    fluid_traj = integrate(AggregateProfile.empty(), params, fluid_cfg)
    return path_distance(sim_traj, fluid_traj)


def _fluid_config(params: Params, horizon: float, dt: float) -> IntegratorConfig:
    trunc = 256 if classify_case(params) == CASE_P_ZERO else None
    stride = max(1, round(0.01 / dt))
    return IntegratorConfig(horizon=horizon, dt=dt, trunc_dim=trunc, record_stride=stride)


def concentration_study(params: Params, n_values, seed: int,
                        burn_in_steps: int = 1_000_000, n_samples: int = 500_000,
                        sample_spacing: int = 20) -> list[ResultRecord]:
    """Steady-state estimates across fleet sizes, against the fluid mean.

    Emits two records per N: the simulated mean (with concentration bounds)
    and its absolute gap to the fluid fixed-point mean.  The gaps should
    shrink, up to sampling slack, as N grows.
    """
    target = mean_queue_length(params)
    records: list[ResultRecord] = []
    for idx, n in enumerate(n_values):
        run_seed = subseed(seed, idx)
        cfg = SimConfig(params=replace(params, n_stations=int(n)), seed=run_seed,
                        burn_in_steps=burn_in_steps, n_samples=n_samples,
                        sample_spacing=sample_spacing)
        est = steady_state_estimate(cfg)
        records.append(ResultRecord(params.p, params.lam, int(n), run_seed,
                                    "sim_mean", est.mean, est.ue, est.le))
        records.append(ResultRecord(params.p, params.lam, int(n), run_seed,
                                    "abs_gap_to_fluid", abs(est.mean - target)))
    return records


def _cell_records(spec: SweepSpec, p: float, lam: float, n: int, rep: int,
                  cell_index: int) -> list[ResultRecord]:
    params = Params(lam=lam, p=p, n_stations=n)
    seed = subseed(spec.base_seed, cell_index * spec.replications + rep)
    records: list[ResultRecord] = []
    for kind in spec.outputs:
        try:
            if kind == "invariant":
                records.append(ResultRecord(p, lam, n, seed, "invariant_mean",
                                            mean_queue_length(params)))
                if classify_case(params) == CASE_P_ZERO:
                    records.append(ResultRecord(p, lam, n, seed, "critical_index_failed",
                                                float("nan")))
                    records.append(ResultRecord(p, lam, n, seed, "scaling_target_failed",
                                                float("nan")))
                else:
                    records.append(ResultRecord(p, lam, n, seed, "critical_index",
                                                float(critical_index(params))))
                    records.append(ResultRecord(p, lam, n, seed, "scaling_target",
                                                scaling_target(params)))
            elif kind == "fluid":
                cfg = _fluid_config(params, spec.horizon, dt=1e-3)
                _, settled = settle_to_invariant(AggregateProfile.empty(), params,
                                                 cfg, spec.settle_tol)
                records.append(ResultRecord(p, lam, n, seed, "fluid_mean",
                                            settled.mean_queue_length))
            elif kind == "simulation":
                cfg = SimConfig(params=params, seed=seed,
                                burn_in_steps=spec.burn_in_steps,
                                n_samples=spec.n_samples,
                                sample_spacing=spec.sample_spacing)
                est = steady_state_estimate(cfg)
                records.append(ResultRecord(p, lam, n, seed, "sim_mean",
                                            est.mean, est.ue, est.le))
            elif kind == "deviation":
                dev = finite_horizon_deviation(params, n, spec.horizon, seed)
                records.append(ResultRecord(p, lam, n, seed, "deviation", dev))
        except Exception as exc:  # noqa: BLE001 -- record and keep sweeping
            records.append(ResultRecord(p, lam, n, seed, f"{kind}_failed:{type(exc).__name__}",
                                        float("nan")))
    return records


def sweep(spec: SweepSpec) -> list[ResultRecord]:
    """Cross-product execution of the spec over a bounded worker pool.

    Cell failures become ``*_failed`` records and do not stop the sweep.  The
    returned list is sorted by (p, lambda, n, replication seed, quantity), so
    identical specs yield identical record sets.
    """
    cells = []
    cell_index = 0
    for p in spec.p_values:
        for lam in spec.lambda_values:
            for n in spec.n_values:
                for rep in range(spec.replications):
                    cells.append((p, lam, n, rep, cell_index))
                cell_index += 1
    workers = _worker_count(len(cells))
    records: list[ResultRecord] = []
    if workers <= 1:
        for cell in cells:
            records.extend(_cell_records(spec, *cell))
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for batch in pool.map(lambda cell: _cell_records(spec, *cell), cells):
                records.extend(batch)
    records.sort(key=lambda r: (r.p, r.lam, r.n, r.seed, r.quantity))
    return records


def _worker_count(n_cells: int) -> int:
    env = os.environ.get(ENV_THREADS)
    if env is not None:
        try:
            limit = int(env)
        except ValueError as exc:
            raise InvalidInputError(f"{ENV_THREADS} must be an integer, got {env!r}") from exc
        return max(1, min(limit, n_cells))
    return max(1, min(os.cpu_count() or 1, n_cells, 8))


def write_results(records: list[ResultRecord], out_dir: str, spec: SweepSpec,
                  wall_time_s: float) -> None:
    """Emit ``results.csv`` and ``manifest.json`` into ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    lines = [CSV_HEADER] + [r.csv_row() for r in records]
    with open(os.path.join(out_dir, "results.csv"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    from . import __version__

    manifest = {
        "spec": json.loads(spec.to_json()),
        "artifact_version": __version__,
        "wall_time_s": wall_time_s,
        "n_records": len(records),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def run_sweep_to_dir(spec: SweepSpec, out_dir: str) -> list[ResultRecord]:
    start = time.monotonic()
    records = sweep(spec)
    write_results(records, out_dir, spec, time.monotonic() - start)
    return records
