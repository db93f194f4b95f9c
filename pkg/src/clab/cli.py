"""Command-line interface.

Subcommands::

    clab invariant --p 0.05 --lambda 0.99 [--json|--csv]
    clab fluid     --p 0.05 --lambda 0.9 --horizon 20 [--dt 1e-3] [--init ...] [--out-csv ...]
    clab simulate  --n 100 --p 0.05 --lambda 0.9 --seed 7 [--burn-in ...] [--trace ...]
    clab compare   --n 100 --p 0.05 --lambda 0.9 --seed 7
    clab deviation --n 1000 --p 0.05 --lambda 0.9 --horizon 10 --seed 7
    clab sweep     --spec spec.json --out results_dir

`--init` accepts ``empty``, ``invariant``, or a path to a JSON array holding
an aggregate profile.  ``CLAB_THREADS`` bounds the sweep worker pool.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import harness, invariant, simulator
from .errors import ClabError, NonConvergenceError
from .fluid import IntegratorConfig, integrate, support_index
from .state import (
    AggregateProfile,
    Params,
    aggregate_from_json,
    profile_to_csv,
    weighted_distance,
)


def _add_params(parser: argparse.ArgumentParser, with_n: bool = False):
    parser.add_argument("--p", type=float, required=True, help="centralization coefficient in [0, 1]")
    parser.add_argument("--lambda", dest="lam", type=float, required=True,
                        help="per-station arrival rate in [0, 1)")
    if with_n:
        parser.add_argument("--n", type=int, required=True, help="number of stations")


def _cmd_invariant(args) -> int:
    params = Params(lam=args.lam, p=args.p)
    prof = invariant.invariant_profile(params)
    if args.csv:
        sys.stdout.write(profile_to_csv(prof.s_inv))
        return 0
    payload = {
        "case_id": prof.case_id,
        "critical_index": prof.critical_index,
        "mean_queue_length": prof.mean_queue_length,
        "s": list(prof.s_inv.s),
        "v": list(prof.v_inv.v),
    }
    if prof.case_id == invariant.CASE_SUBCRITICAL:
        payload["closed_form_mean"] = invariant.closed_form_mean_queue_length(params)
    json.dump(payload, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


def _initial_profile(init: str, params: Params) -> AggregateProfile:
    if init == "empty":
        return AggregateProfile.empty()
    if init == "invariant":
        return invariant.invariant_profile(params).v_inv
    with open(init) as fh:
        return aggregate_from_json(fh.read())


def _cmd_fluid(args) -> int:
    params = Params(lam=args.lam, p=args.p)
    v0 = _initial_profile(args.init, params)
    cfg = IntegratorConfig(horizon=args.horizon, dt=args.dt, trunc_dim=args.trunc_dim,
                           record_stride=args.record_stride)
    traj = integrate(v0, params, cfg)
    if args.out_csv:
        with open(args.out_csv, "w") as fh:
            fh.write("t,i,v_i\n")
            for t, state in zip(traj.times, traj.states):
                for i, x in enumerate(state.v):
                    fh.write(f"{t!r},{i},{x!r}\n")
    target = invariant.invariant_profile(params).v_inv
    distances = [weighted_distance(s, target) for s in traj.states]
    settle_time = None
    for t, d in zip(traj.times, distances):
        if d <= args.settle_tol:
            settle_time = t
            break
    summary = {
        "final_distance_to_invariant": distances[-1],
        "settle_time": settle_time,
        "settle_tol": args.settle_tol,
        "final_mean_queue_length": traj.final().mean_queue_length,
        "support_history": [
            [t, support_index(s, 1e-6)] for t, s in zip(traj.times, traj.states)
        ],
    }
    json.dump(summary, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


def _sim_config(args) -> simulator.SimConfig:
    params = Params(lam=args.lam, p=args.p, n_stations=args.n)
    return simulator.SimConfig(
        params=params, seed=args.seed, burn_in_steps=args.burn_in,
        n_samples=args.samples, sample_spacing=args.spacing, mode=args.mode,
    )


def _estimate_payload(est: simulator.SteadyStateEstimate) -> dict:
    return {"mean": est.mean, "ue": est.ue, "le": est.le,
            "n_samples": est.n_samples, "seed": est.seed}


def _cmd_simulate(args) -> int:
    cfg = _sim_config(args)
    if args.trace:
        _write_trace(cfg, args.trace, args.trace_steps)
    est = simulator.steady_state_estimate(cfg)
    json.dump(_estimate_payload(est), sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


def _write_trace(cfg: simulator.SimConfig, path: str, n_steps: int) -> None:
    """Replay the first events of the seeded estimator run as CSV rows
    step,event_type,station,v1 (draw layout matches the estimator exactly)."""
    import numpy as np

    params = cfg.params
    n = params.n_stations
    rng = simulator._event_rng(cfg.seed)
    queue_mode = cfg.mode == simulator.QUEUE_LEVEL
    total = cfg.burn_in_steps + cfg.n_samples * cfg.sample_spacing
    first_chunk = min(simulator._EVENT_CHUNK, total)
    n_steps = min(n_steps, first_chunk)
    u_type = rng.random(first_chunk)[:n_steps]
    u_target = rng.random(first_chunk)[:n_steps] if queue_mode else None
    if queue_mode:
        engine = simulator._QueueEngine(n, np.zeros(n, dtype=np.int64))
    else:
        engine = simulator._AggregateEngine(n, np.array([n, 0], dtype=np.int64))
    with open(path, "w") as fh:
        fh.write("step,event_type,station,v1\n")
        for k in range(n_steps):
            if queue_mode:
                kind, station, _ = engine.apply(params.lam, params.p, u_type[k], u_target[k])
            else:
                kind, station, _ = engine.apply(params.lam, params.p, u_type[k])
            v1 = float(engine.aggregate_counts()[1]) / n
            fh.write(f"{k + 1},{kind},{station},{v1!r}\n")


def _cmd_compare(args) -> int:
    cfg = _sim_config(args)
    est_p, est_0 = simulator.compare_policies(cfg)
    json.dump({
        "centralized": _estimate_payload(est_p),
        "baseline_p0": _estimate_payload(est_0),
        "intervals_overlap": est_p.overlaps(est_0),
    }, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


def _cmd_deviation(args) -> int:
    params = Params(lam=args.lam, p=args.p)
    dev = harness.finite_horizon_deviation(params, args.n, args.horizon, args.seed)
    json.dump({"n": args.n, "horizon": args.horizon, "seed": args.seed,
               "deviation": dev}, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


def _cmd_sweep(args) -> int:
    with open(args.spec) as fh:
        spec = harness.SweepSpec.from_json(fh.read())
    records = harness.run_sweep_to_dir(spec, args.out)
    sys.stdout.write(f"wrote {len(records)} records to {args.out}\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clab", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_inv = sub.add_parser("invariant", help="closed-form invariant state and analytics")
    _add_params(p_inv)
    fmt = p_inv.add_mutually_exclusive_group()
    fmt.add_argument("--json", action="store_true", default=True)
    fmt.add_argument("--csv", action="store_true", default=False)
    p_inv.set_defaults(func=_cmd_invariant)

    p_fluid = sub.add_parser("fluid", help="integrate the fluid model")
    _add_params(p_fluid)
    p_fluid.add_argument("--horizon", type=float, required=True)
    p_fluid.add_argument("--dt", type=float, default=1e-3)
    p_fluid.add_argument("--init", default="empty",
                         help="'empty', 'invariant', or a JSON profile path")
    p_fluid.add_argument("--trunc-dim", type=int, default=None)
    p_fluid.add_argument("--record-stride", type=int, default=100)
    p_fluid.add_argument("--settle-tol", type=float, default=1e-4)
    p_fluid.add_argument("--out-csv", default=None, help="write trajectory rows t,i,v_i here")
    p_fluid.set_defaults(func=_cmd_fluid)

    for name, fn in (("simulate", _cmd_simulate), ("compare", _cmd_compare)):
        p_sim = sub.add_parser(name, help=f"{name} the finite-N chain")
        _add_params(p_sim, with_n=True)
        p_sim.add_argument("--seed", type=int, required=True)
        p_sim.add_argument("--burn-in", type=int, default=1_000_000)
        p_sim.add_argument("--samples", type=int, default=500_000)
        p_sim.add_argument("--spacing", type=int, default=20)
        p_sim.add_argument("--mode", choices=[simulator.QUEUE_LEVEL, simulator.AGGREGATE_COUPLED],
                           default=simulator.QUEUE_LEVEL)
        if name == "simulate":
            p_sim.add_argument("--trace", default=None, help="write an event trace CSV here")
            p_sim.add_argument("--trace-steps", type=int, default=10_000)
        p_sim.set_defaults(func=fn)

    p_dev = sub.add_parser("deviation", help="finite-horizon distance between chain and fluid path")
    _add_params(p_dev, with_n=True)
    p_dev.add_argument("--horizon", type=float, required=True)
    p_dev.add_argument("--seed", type=int, required=True)
    p_dev.set_defaults(func=_cmd_deviation)

    p_sweep = sub.add_parser("sweep", help="run a sweep spec and emit results.csv + manifest.json")
    p_sweep.add_argument("--spec", required=True, help="path to a SweepSpec JSON file")
    p_sweep.add_argument("--out", required=True, help="output directory")
    p_sweep.set_defaults(func=_cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NonConvergenceError as exc:
        sys.stderr.write(f"error: {exc} (final distance {exc.final_distance:.3e})\n")
        return 2
    except ClabError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
