"""Command-line front end.

Every primary output is a deterministic function of the flags (and seed);
run timestamps go to a ``<output>.meta.json`` sidecar so repeated runs
produce byte-identical files.

Exit codes
----------
0   success
1   unexpected internal error
2   usage error (bad flags, missing files or directories, invalid parameters)
3   NotConverged         4   NoOscillation        5   Diverged
6   FormatError          7   SamplingError        8   SeriesNotConverged
9   NoLimitCycle         10  CellSolveFailed      11  OutOfGridRange
12  UnsupportedVersion   13  CorruptManifold      14  StaleManifold
15  NoIntersection       16  NoFeasibleEstimate   17  NoAmplitudeMatch
18  UnreliableStatistics 19  NoStepDetected       20  InvalidFrequency
21  DegenerateDrag
"""

from __future__ import annotations

import argparse
import datetime as _dt
import io
import json
import math
import os
import sys
from pathlib import Path

from . import __version__, errors
from .identify import PriorKnowledge, TestObservation, identify_single_test, identify_two_freq, monte_carlo
from .lprs import df_predict, solve_limit_cycle
from .manifold import GridSpec, generate_ufm, load_manifold, save_manifold, scale_manifold, slice_at_tp
from .mrft import MrftConfig, detect_limit_cycle, simulate_mrft, write_log
from .plant import SoiptdParams, TimeDelayLTI, altitude_plant, attitude_plant, soiptd
from .stepfit import fit_step_response, read_step_log

OUTDIR_ENV = "MRFTID_OUTDIR"

EXIT_CODES = {
    errors.InvalidParameter: 2,
    errors.NotConverged: 3,
    errors.NoOscillation: 4,
    errors.Diverged: 5,
    errors.FormatError: 6,
    errors.SamplingError: 7,
    errors.SeriesNotConverged: 8,
    errors.NoLimitCycle: 9,
    errors.CellSolveFailed: 10,
    errors.OutOfGridRange: 11,
    errors.UnsupportedVersion: 12,
    errors.CorruptManifold: 13,
    errors.StaleManifold: 14,
    errors.NoIntersection: 15,
    errors.NoFeasibleEstimate: 16,
    errors.NoAmplitudeMatch: 17,
    errors.UnreliableStatistics: 18,
    errors.NoStepDetected: 19,
    errors.InvalidFrequency: 20,
    errors.DegenerateDrag: 21,
}
EXIT_USAGE = 2
EXIT_INTERNAL = 1


class UsageError(Exception):
    pass


def exit_code_for(exc: BaseException) -> int:
    for cls in type(exc).__mro__:
        if cls in EXIT_CODES:
            return EXIT_CODES[cls]
    return EXIT_INTERNAL


# --- argument plumbing -------------------------------------------------------

def _add_plant(p):
    g = p.add_argument_group("plant (SOIPTD values, a JSON file, or physical parameters)")
    g.add_argument("--K", type=float, help="SOIPTD gain")
    g.add_argument("--Tp", type=float, help="propulsion time constant [s]")
    g.add_argument("--Td", type=float, help="aerodynamic time constant [s]")
    g.add_argument("--tau", type=float, default=0.0, help="time delay [s]")
    g.add_argument("--plant-json", type=Path, help="plant file (TimeDelayLTI or SOIPTD fields)")
    g.add_argument("--Jx", type=float, help="attitude: inertia")
    g.add_argument("--Bx", type=float, help="attitude: rotational drag")
    g.add_argument("--kM", type=float, help="attitude: moment gain")
    g.add_argument("--mass", type=float, help="altitude: vehicle mass")
    g.add_argument("--kF", type=float, help="altitude: thrust gain per motor")
    g.add_argument("--mu-n", type=float, help="altitude: effective motor count")
    g.add_argument("--Dz", type=float, help="altitude: vertical drag")


def _plant(args) -> TimeDelayLTI:
    if args.plant_json is not None:
        _require_file(args.plant_json)
        d = json.loads(args.plant_json.read_text(encoding="utf-8"))
        if "T_d" in d:
            return soiptd(SoiptdParams(d["K"], d["T_p"], d["T_d"], d.get("tau", 0.0)))
        return TimeDelayLTI.from_dict(d)
    if args.Jx is not None or args.Bx is not None or args.kM is not None:
        _need(args, "Jx", "Bx", "kM", "Tp")
        return attitude_plant(args.Jx, args.Bx, args.kM, args.Tp, args.tau)
    if args.mass is not None or args.Dz is not None:
        _need(args, "mass", "kF", "mu_n", "Dz", "Tp")
        return altitude_plant(args.mass, args.kF, args.mu_n, args.Dz, args.Tp, args.tau)
    _need(args, "K", "Tp", "Td")
    return soiptd(K=args.K, T_p=args.Tp, T_d=args.Td, tau=args.tau)


def _need(args, *names):
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        raise UsageError("missing plant flag(s): " + ", ".join("--" + n.replace("_", "-") for n in missing))


def _require_file(path: Path):
    if not Path(path).is_file():
        raise UsageError(f"file not found: {path}")


def _outdir(args) -> Path:
    d = args.outdir or os.environ.get(OUTDIR_ENV) or "."
    d = Path(d)
    if not d.is_dir():
        raise UsageError(f"output directory does not exist: {d}")
    return d


def _resolved(args) -> dict:
    out = {}
    for k, v in sorted(vars(args).items()):
        if k == "func":
            continue
        if isinstance(v, Path):
            v = str(v)
        elif isinstance(v, list):
            v = [str(x) if isinstance(x, Path) else x for x in v]
        out[k] = v
    out["outdir"] = None  # the directory is not part of the result
    return out


def _clean(obj):
    """Non-finite floats become null so the output stays strict JSON."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _dump(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write(path: Path, text: str, args):
    path.write_text(text, encoding="utf-8")
    meta = {
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "version": __version__,
        "command": args.command,
    }
    path.with_name(path.name + ".meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    print(path)


def _parse_obs(text: str) -> TestObservation:
    """``beta:freq_hz[:amplitude[:h]]``"""
    parts = text.split(":")
    if not 2 <= len(parts) <= 4:
        raise UsageError(f"observation must be beta:freq[:amplitude[:h]], got {text!r}")
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise UsageError(f"non-numeric observation {text!r}") from None
    amp = vals[2] if len(vals) > 2 else None
    h = vals[3] if len(vals) > 3 else 1.0
    return TestObservation(vals[0], vals[1], h, amp)


def _prior(args) -> PriorKnowledge:
    return PriorKnowledge(args.Tp, tuple(args.td_bounds), tuple(args.tau_bounds), args.gain)


def _manifolds(args):
    out = []
    for p in args.manifold:
        _require_file(p)
        out.append(load_manifold(p, n_spot=args.spot_checks))
    return out


# --- commands ---------------------------------------------------------------

def cmd_simulate(args):
    out = _outdir(args)
    plant = _plant(args)
    cfg = MrftConfig(args.beta, args.h)
    log = simulate_mrft(plant, cfg, args.duration, dt=args.dt)
    config = _resolved(args)
    buf = io.StringIO()
    write_log(log, buf, comment="config: " + json.dumps(config, sort_keys=True))
    _write(out / f"{args.name}.csv", buf.getvalue(), args)
    lc = detect_limit_cycle(log, cfg)
    summary = {
        "omega_hz": lc.frequency_hz,
        "amplitude": lc.amplitude,
        "quality": {"period_spread": lc.period_spread, "n_cycles": lc.n_cycles},
        "config": config,
    }
    _write(out / f"{args.name}.json", _dump(summary), args)


def cmd_solve(args):
    plant = _plant(args)
    cfg = MrftConfig(args.beta, args.h)
    lc = solve_limit_cycle(plant, cfg)
    try:
        df = df_predict(plant, cfg)
        df_w, df_a = df.frequency_hz, df.amplitude
    except errors.NoLimitCycle:
        df_w = df_a = None
    result = {
        "omega_hz": lc.frequency_hz,
        "amplitude": lc.amplitude,
        "df_omega_hz": df_w,
        "df_amplitude": df_a,
        "residual": lc.residual,
        "plant": plant.to_dict(),
        "config": _resolved(args),
    }
    text = _dump(result)
    if args.out:
        _write(_outdir(args) / args.out, text, args)
    else:
        sys.stdout.write(text)


def cmd_gen_manifold(args):
    out = _outdir(args)
    grid = GridSpec(tuple(args.tp_range), tuple(args.td_range), args.n_tp, args.n_td)
    man = generate_ufm(args.beta, grid, workers=args.workers)
    buf = io.StringIO()
    save_manifold(man, buf)
    _write(out / args.out, buf.getvalue(), args)
    if man.failed_cells:
        print(f"{len(man.failed_cells)} cell(s) failed and were marked infeasible", file=sys.stderr)


def cmd_identify(args):
    out = _outdir(args)
    obs = [_parse_obs(o) for o in args.obs]
    prior = _prior(args)
    mans = _manifolds(args)
    if len(obs) == 2:
        res = identify_two_freq(obs, prior, mans)
    elif len(obs) == 1:
        res = identify_single_test(obs[0], prior, mans)
    else:
        raise UsageError("give one (single test) or two (two-frequency) --obs values")
    doc = res.to_dict()
    doc["config"] = _resolved(args)
    _write(out / args.out, _dump(doc), args)


def cmd_sensitivity(args):
    out = _outdir(args)
    obs = [_parse_obs(o) for o in args.obs]
    if len(obs) not in (1, 2):
        raise UsageError("give one (single test) or two (two-frequency) --obs values")
    res = monte_carlo(obs, _prior(args), _manifolds(args), args.sigma, n=args.n, seed=args.seed, workers=args.workers)
    doc = res.to_dict()
    doc["config"] = _resolved(args)
    _write(out / args.out, _dump(doc), args)


def cmd_fit_step(args):
    out = _outdir(args)
    _require_file(args.log)
    t, f = read_step_log(args.log)
    fit = fit_step_response(t, f, t_step=args.t_step)
    doc = {"k": fit.k, "T_p": fit.T_p, "tau_p": fit.tau_p, "offset": fit.offset, "rms": fit.rms,
           "config": _resolved(args)}
    _write(out / args.out, _dump(doc), args)


def _row(*values) -> str:
    return ",".join(repr(float(v)) for v in values) + "\n"


def cmd_plotdata(args):
    out = _outdir(args)
    _require_file(args.manifold[0])
    man = load_manifold(args.manifold[0], n_spot=args.spot_checks)
    sm = scale_manifold(man, args.omega or man.freq_hz)
    buf = io.StringIO()
    buf.write("# config: " + json.dumps(_resolved(args), sort_keys=True) + "\n")
    if args.slice_tp is None:
        buf.write("T_p,T_d,tau,amp\n")
        for i, tp in enumerate(sm.tp_axis):
            for j, td in enumerate(sm.td_axis):
                if math.isfinite(sm.tau[i, j]):
                    buf.write(_row(tp, td, sm.tau[i, j], sm.amp[i, j]))
    else:
        sl = slice_at_tp(sm, args.slice_tp)
        buf.write("T_d,tau,amp\n")
        for td, tau, amp in zip(sl.td, sl.tau, sl.amp):
            if math.isfinite(tau):
                buf.write(_row(td, tau, amp))
    _write(out / args.out, buf.getvalue(), args)


# --- parser -----------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mrftid", description="MRFT limit cycles and SOIPTD identification.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--outdir", type=Path, help=f"output directory (default ${OUTDIR_ENV} or .)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="time-domain MRFT simulation")
    _add_plant(s)
    s.add_argument("--beta", type=float, required=True)
    s.add_argument("--h", type=float, default=1.0)
    s.add_argument("--dt", type=float)
    s.add_argument("--duration", type=float, default=60.0)
    s.add_argument("--name", default="mrft", help="basename of the .csv log and .json summary")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("solve", help="exact limit cycle and describing-function estimate")
    _add_plant(s)
    s.add_argument("--beta", type=float, required=True)
    s.add_argument("--h", type=float, default=1.0)
    s.add_argument("--out", help="write to this file in the output directory instead of stdout")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("gen-manifold", help="tabulate the unit-frequency manifold")
    s.add_argument("--beta", type=float, required=True)
    s.add_argument("--tp-range", type=float, nargs=2, default=list(GridSpec.tp_range))
    s.add_argument("--td-range", type=float, nargs=2, default=list(GridSpec.td_range))
    s.add_argument("--n-tp", type=int, default=GridSpec.n_tp)
    s.add_argument("--n-td", type=int, default=GridSpec.n_td)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_gen_manifold)

    for name, func, helptext in (
        ("identify", cmd_identify, "identify T_d and tau"),
        ("sensitivity", cmd_sensitivity, "Monte-Carlo noise sensitivity of the identification"),
    ):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--obs", action="append", required=True, help="beta:freq_hz[:amplitude[:h]]")
        s.add_argument("--Tp", type=float, required=True, help="known propulsion time constant [s]")
        s.add_argument("--gain", type=float, help="known SOIPTD gain (single-test mode)")
        s.add_argument("--manifold", type=Path, action="append", required=True)
        s.add_argument("--td-bounds", type=float, nargs=2, default=[0.0, math.inf])
        s.add_argument("--tau-bounds", type=float, nargs=2, default=[0.0, math.inf])
        s.add_argument("--spot-checks", type=int, default=8)
        s.add_argument("--out", required=True)
        if name == "sensitivity":
            s.add_argument("--sigma", type=float, required=True)
            s.add_argument("--n", type=int, default=1000)
            s.add_argument("--seed", type=int, default=0)
            s.add_argument("--workers", type=int, default=1)
        s.set_defaults(func=func)

    s = sub.add_parser("fit-step", help="first-order-plus-delay fit of a t,f step log")
    s.add_argument("--log", type=Path, required=True)
    s.add_argument("--t-step", type=float, default=0.0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_fit_step)

    s = sub.add_parser("plotdata", help="manifold surface or slice as CSV")
    s.add_argument("--manifold", type=Path, action="append", required=True)
    s.add_argument("--omega", type=float, help="scale to this measured frequency [Hz]")
    s.add_argument("--slice-tp", type=float, help="emit the slice at this T_p instead of the surface")
    s.add_argument("--spot-checks", type=int, default=8)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_plotdata)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except errors.MrftError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return exit_code_for(exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
