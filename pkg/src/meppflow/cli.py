"""Command-line interface.

Subcommands: ``run`` (deterministic integration), ``verify`` (invariant
suite), ``sample`` (stochastic ensemble), ``rate`` (rate functional of a
stored path), ``check-fd`` (Monte-Carlo fluctuation-dissipation probe).

Exit codes: 0 success, 1 model/domain error, 2 usage error (argparse),
3 check failure.
"""

import argparse
import json
import os
import sys

import numpy as np

from .errors import MeppFlowError, ModelError
from .evolve import (diagnostics, run_gradient_flow, read_trajectory_csv,
                     write_diagnostics_csv, write_trajectory_csv)
from .ldp import rate_functional
from .modelio import load_model
from .stochastic import NoiseConfig, fd_check, sample_path
from .verify import format_table, run_verification


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="meppflow",
        description="Dissipative gradient flows from constrained entropy "
                    "production: integrate, verify, sample, and rate.")
    sub = p.add_subparsers(dest="command", required=True)

    runp = sub.add_parser("run", help="integrate a model deterministically")
    runp.add_argument("--model", required=True)
    runp.add_argument("--out", required=True)
    runp.add_argument("--dt", type=float, default=None)
    runp.add_argument("--steps", type=int, default=None)
    runp.add_argument("--scheme", choices=("explicit", "semi_implicit"),
                      default=None)

    verp = sub.add_parser("verify", help="run the invariant suite")
    verp.add_argument("--model", default=None)

    samp = sub.add_parser("sample", help="integrate a stochastic ensemble")
    samp.add_argument("--model", required=True)
    samp.add_argument("--eps", type=float, default=None)
    samp.add_argument("--trajectories", type=int, required=True)
    samp.add_argument("--seed", type=int, default=None)
    samp.add_argument("--out", required=True)

    ratep = sub.add_parser("rate", help="rate functional of a stored path")
    ratep.add_argument("--model", required=True)
    ratep.add_argument("--path", required=True)
    ratep.add_argument("--out", required=True)

    fdp = sub.add_parser("check-fd", help="fluctuation-dissipation probe")
    fdp.add_argument("--model", required=True)
    fdp.add_argument("--eps", type=float, default=None)
    fdp.add_argument("--draws", type=int, default=10000)
    fdp.add_argument("--probes", type=int, default=20)
    fdp.add_argument("--seed", type=int, default=None)
    return p


def _cmd_run(args) -> int:
    model = load_model(args.model)
    dt = args.dt if args.dt is not None else model.dt
    steps = args.steps if args.steps is not None else model.steps
    scheme = args.scheme if args.scheme is not None else model.scheme
    traj = run_gradient_flow(model.initial_state, model.metric,
                             model.functional, dt, steps, scheme=scheme,
                             names=model.names)
    os.makedirs(args.out, exist_ok=True)
    write_trajectory_csv(traj, os.path.join(args.out, "trajectory.csv"))
    table = diagnostics(traj, model.metric, model.functional)
    write_diagnostics_csv(table, os.path.join(args.out, "diagnostics.csv"))
    print(f"wrote {traj.n_times} states to {args.out}")
    return 0


def _cmd_verify(args) -> int:
    model = load_model(args.model) if args.model else None
    checks = run_verification(model)
    print(format_table(checks))
    return 0 if all(c.passed for c in checks) else 3


def _noise_defaults(model, eps, seed):
    if eps is None:
        if model.noise is None:
            raise ModelError("no --eps given and the model has no [noise] "
                             "section")
        eps = model.noise.epsilon
    if seed is None:
        seed = model.noise.seed if model.noise is not None else 0
    return eps, seed


def _cmd_sample(args) -> int:
    model = load_model(args.model)
    eps, seed = _noise_defaults(model, args.eps, args.seed)
    os.makedirs(args.out, exist_ok=True)
    n = args.trajectories
    clipped_total = 0
    finals = []
    for sid in range(n):
        cfg = NoiseConfig(epsilon=eps, seed=seed, stream_id=sid)
        traj, info = sample_path(model.initial_state, model.metric,
                                 model.functional, model.dt, model.steps, cfg,
                                 names=model.names)
        clipped_total += info.clipped_steps
        finals.append(np.stack(traj.state_arrays(traj.n_times - 1)))
        write_trajectory_csv(
            traj, os.path.join(args.out, f"trajectory_{sid:04d}.csv"))
    mean_final = np.mean(np.array(finals), axis=0)
    fd = fd_check(model.metric, model.initial_state, model.dt, eps,
                  n_draws=min(4000, max(1000, 2 * n)), n_probes=10, seed=seed)
    summary = {
        "epsilon": eps,
        "seed": seed,
        "trajectories": n,
        "steps": model.steps,
        "clipped_steps_total": clipped_total,
        "mean_final_field": {
            name: [repr(float(v)) for v in mean_final[i]]
            for i, name in enumerate(model.names)},
        "fd_check": {
            "n_draws": fd.n_draws,
            "n_probes": fd.n_probes,
            "max_dev_sigmas": fd.max_dev_sigmas,
            "mass_residual": fd.mass_residual,
            "passed": fd.passed,
        },
    }
    with open(os.path.join(args.out, "ensemble.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
    print(f"sampled {n} trajectories (eps={eps}); FD check "
          f"{'passed' if fd.passed else 'FAILED'} "
          f"(max dev {fd.max_dev_sigmas:.2f} sigma)")
    return 0 if fd.passed else 3


def _cmd_rate(args) -> int:
    model = load_model(args.model)
    traj = read_trajectory_csv(args.path, model.grid, model.names,
                               model.conserved)
    report = rate_functional(traj, model.metric, model.functional)
    payload = {
        "rate_value": report.rate_value,
        "identity_residual_max": report.identity_residual_max,
        "series": [
            {"t": float(report.times[k]),
             "gap": float(report.pointwise_gap[k]),
             "ds_rate": float(report.ds_rate[k]),
             "phi": float(report.phi[k]),
             "psi": float(report.psi[k])}
            for k in range(report.times.size)],
    }
    with open(args.out, "w") as fh:
        json.dump(payload, fh, indent=2)
    print(f"rate value {report.rate_value!r} "
          f"(expansion identity residual {report.identity_residual_max:.3e})")
    return 0


def _cmd_check_fd(args) -> int:
    model = load_model(args.model)
    eps, seed = _noise_defaults(model, args.eps, args.seed)
    fd = fd_check(model.metric, model.initial_state, model.dt, eps,
                  n_draws=args.draws, n_probes=args.probes, seed=seed)
    print(f"{'probe':>5}  {'empirical':>14}  {'expected':>14}  {'dev/sigma':>9}")
    for i, (emp, exp, dev) in enumerate(fd.probes):
        print(f"{i:>5}  {emp:>14.6e}  {exp:>14.6e}  {dev:>9.2f}")
    print(f"worst deviation {fd.max_dev_sigmas:.2f} sigma over "
          f"{fd.n_draws} draws; conserved-total residual {fd.mass_residual:.2e}")
    print("fluctuation-dissipation check "
          + ("PASSED" if fd.passed else "FAILED"))
    return 0 if fd.passed else 3


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "verify": _cmd_verify,
        "sample": _cmd_sample,
        "rate": _cmd_rate,
        "check-fd": _cmd_check_fd,
    }
    try:
        return handlers[args.command](args)
    except MeppFlowError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
