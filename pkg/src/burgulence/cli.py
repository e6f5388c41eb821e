"""Command-line entry point for the `burgulence` script."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from burgulence.experiment import (
    dump_config,
    independence_check,
    load_config,
    run_experiment,
    simulate_ensemble,
)

log = logging.getLogger("burgulence")


def _load(args):
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.out_dir is not None:
        overrides["output_dir"] = args.out_dir
    if args.workers is not None:
        overrides["workers"] = args.workers
    return load_config(args.config, **overrides)


def cmd_run(args):
    config = _load(args)
    result = run_experiment(config, workers=args.workers, cache_dir=args.cache_dir)
    m = result.manifest
    for name, (fit, expected, tol) in result.fits.items():
        if fit is None:
            print(f"{name:24s} fit unavailable")
        else:
            print(f"{name:24s} slope={fit.slope:+.3f}±{fit.slope_stderr:.3f} "
                  f"r2={fit.r_squared:.4f} expected={expected:+.2f}±{tol:.2f}")
    print(f"violations: {m.violations}; failed realizations: {len(m.failed)}")
    print(f"outputs written to {config.output_dir} (digest {m.output_digest[:16]})")
    return 0 if m.success and m.fits_within_bands else 1


def cmd_check_invariants(args):
    config = _load(args)
    config = replace(config, T_total=min(config.T_total, args.t_total),
                     ensemble_size=max(2, min(config.ensemble_size, args.realizations)))
    records = simulate_ensemble(config, workers=args.workers, cache_dir=args.cache_dir)
    bad = [v for recs in records.values() for rec in recs for v in rec.violations]
    worst = {}
    for recs in records.values():
        for rec in recs:
            for lg in rec.ledgers:
                worst["dissipation_identity"] = max(worst.get("dissipation_identity", 0.0), lg.residual)
            if rec.kick_residuals.size:
                worst["kick_bookkeeping"] = max(worst.get("kick_bookkeeping", 0.0),
                                                float(rec.kick_residuals.max()))
    for name, value in sorted(worst.items()):
        print(f"{name:22s} worst relative residual {value:.3e}")
    for v in bad:
        print(f"VIOLATION nu={v.nu:g} realization={v.realization_id} t={v.t:g} "
              f"{v.invariant} value={v.value:.6g}")
    print("ok" if not bad else f"{len(bad)} violation(s)")
    return 0 if not bad else 1


def cmd_oracle_verify(args):
    from burgulence.flux import builtin_flux
    from burgulence.integrator import SolverState, advance_interval
    from burgulence.oracle import cole_hopf, fd_reference, sine_initial

    classical = builtin_flux("classical")
    nu, t = 0.1, 0.5
    ok = True
    errors = []
    for n in (128, 256, 512):
        u0 = sine_initial(n)
        ref = cole_hopf(u0, nu, t, n_modes=4096)
        state, _ = advance_interval(SolverState(u0, 0.0, nu), t, classical)
        err = float(np.max(np.abs(state.u.samples - ref.samples)))
        errors.append(err)
        print(f"integrator vs Cole-Hopf  N={n:4d}  L_inf={err:.3e}")
    ok &= errors[-1] < 1e-6
    u0 = sine_initial(256)
    fd = fd_reference(u0, nu, t, classical, args.n_fine)
    ref = cole_hopf(u0, nu, t, n_modes=4096)
    d = float(np.max(np.abs(fd.samples - ref.samples)))
    print(f"fd_reference(N_fine={args.n_fine}) vs Cole-Hopf  L_inf={d:.3e}")
    if args.n_fine >= 4096:
        ok &= d < 1e-6
    print("ok" if ok else "FAILED")
    return 0 if ok else 1


def cmd_independence(args):
    config = _load(args)
    if args.nu:
        config = replace(config, nu_sweep=tuple(args.nu))
    rows = independence_check(config, args.u0_a, args.u0_b, workers=args.workers,
                              cache_dir=args.cache_dir)
    ok = True
    for row in rows:
        ok &= row.agrees
        print(f"nu={row.nu:<7g} {row.quantity:22s} a={row.mean_a:.5g}±{row.stderr_a:.2g} "
              f"b={row.mean_b:.5g}±{row.stderr_b:.2g} {'agree' if row.agrees else 'DIFFER'}")
    return 0 if ok else 1


def build_parser():
    parser = argparse.ArgumentParser(prog="burgulence", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("config", type=Path, help="experiment config file")
        p.add_argument("--seed", type=int, default=None, help="override master_seed")
        p.add_argument("--out-dir", default=None, help="override output directory")
        p.add_argument("--workers", type=int, default=None, help="worker processes")
        p.add_argument("--cache-dir", default=None,
                       help="reuse/store finished realizations here")

    p = sub.add_parser("run", help="full ensemble run with outputs and manifest")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("check-invariants", help="short run, identity and max-principle checks")
    common(p)
    p.add_argument("--t-total", type=int, default=4)
    p.add_argument("--realizations", type=int, default=4)
    p.set_defaults(func=cmd_check_invariants)

    p = sub.add_parser("oracle-verify", help="integrator vs Cole-Hopf and finite differences")
    common(p, config=False)
    p.add_argument("--n-fine", type=int, default=1024)
    p.set_defaults(func=cmd_oracle_verify)

    p = sub.add_parser("independence", help="compare two initial conditions")
    common(p)
    p.add_argument("--u0-a", default="zero")
    p.add_argument("--u0-b", default="sine:3")
    p.add_argument("--nu", type=float, action="append", default=None,
                   help="viscosity to compare (repeatable; default: the config sweep)")
    p.set_defaults(func=cmd_independence)

    p = sub.add_parser("show-config", help="print the canonical form of a config")
    common(p)
    p.set_defaults(func=lambda a: print(dump_config(_load(a)), end="") or 0)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
