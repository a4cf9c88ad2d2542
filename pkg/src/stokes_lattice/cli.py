"""Command-line front end.

Subcommands
-----------
field        sample velocity, pressure and vorticity on a grid
streamlines  trace streamlines from seeds and report the stagnation census
coeffs       per-order magnitudes of the Laurent series at a probe point
verify       run the validation battery on every configured singularity
compare      series solution against the transform-method oracle

Exit codes: 0 success, 1 configuration error, 2 accuracy not met,
3 I/O error, 4 a verification check failed.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import math
import sys

import numpy as np

from stokes_lattice import __version__
from stokes_lattice.errors import (AccuracyNotMetError, ConfigurationError, ConvergenceError,
                                   DomainError, ProximityError)
from stokes_lattice.flow import (GridSpec, sample_grid, stagnation_census, trace_streamlines,
                                 worker_count)
from stokes_lattice.model import TWO_PI, Kind
from stokes_lattice.problem import ProblemConfig

log = logging.getLogger("stokes_lattice.cli")

EXIT_OK, EXIT_CONFIG, EXIT_ACCURACY, EXIT_IO, EXIT_CHECK = 0, 1, 2, 3, 4
FIELD_HEADER = ("x", "y", "u", "v", "p_over_eta", "omega", "masked")
STREAM_HEADER = ("seed", "step", "x", "y")
COEFF_HEADER = ("n", "fh", "gk")
# fault-injection hook for tests: relative perturbation of the first F coefficient
FAULT_SCALE = 1e-3


class CheckFailed(Exception):
    pass


# --------------------------------------------------------------------------
# Output helpers
# --------------------------------------------------------------------------

def _num(v):
    """Plain Python scalar for JSON/CSV (repr of a float round-trips exactly)."""
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    return float(v)


def _meta(command, config, solutions=(), **extra):
    achieved = max((float(getattr(s, "built_tolerance", 0.0)) for s in solutions), default=0.0)
    meta = {"command": command, "version": __version__, "geometry": config.to_dict()["geometry"],
            "kinds": [s.kind.value for s in config.singularities],
            "tolerance": config.tolerance, "tolerance_achieved": achieved,
            "config": config.to_dict()}
    meta.update(extra)
    return meta


def _write(out_path, text):
    if out_path in (None, "-"):
        sys.stdout.write(text)
        return
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else
                    ("true" if v is True else "false" if v is False else v) for v in r])
    return buf.getvalue()


def _emit(args, header, rows, meta):
    rows = [tuple(_num(v) for v in r) for r in rows]
    if args.format == "json":
        text = json.dumps({"meta": meta, "rows": [dict(zip(header, r)) for r in rows]}, indent=1) + "\n"
    else:
        text = _csv_text(header, rows)
    _write(args.out, text)


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def _config(args) -> ProblemConfig:
    config = ProblemConfig.load(args.config)
    if getattr(args, "tol", None) is not None:
        config = dataclasses.replace(config, tolerance=args.tol)
    return config


def _inject_fault(solutions):
    """Perturb the first stored F coefficient of the first channel solution."""
    out = list(solutions)
    for i, s in enumerate(out):
        if s.domain == "channel" and len(s.parts.F):
            F = np.array(s.parts.F, dtype=complex)
            F[0] += FAULT_SCALE * max(1.0, abs(F[0]))
            out[i] = dataclasses.replace(s, parts=s.parts.replace(F=F))
            log.warning("fault injected into F_1 of singularity #%d", i)
            break
    return out


def _extent(args, config):
    L = config.period_l
    H = config.height_h if config.domain == "channel" else L
    x0 = 0.0 if args.x0 is None else args.x0
    x1 = L if args.x1 is None else args.x1
    y0 = 0.0 if args.y0 is None else args.y0
    y1 = H if args.y1 is None else args.y1
    return x0, x1, y0, y1


def cmd_field(args) -> int:
    config = _config(args)
    sols = config.build()
    x0, x1, y0, y1 = _extent(args, config)
    c = config.scale_c
    grid = GridSpec(c * x0, c * x1, args.nx, c * y0, c * y1, args.ny)
    if sols:
        table = sample_grid(sols, grid)
        cols = (table.x / c, table.y / c, table.u, table.v, c * table.p_over_eta, c * table.omega)
        masked = table.masked
    else:
        X, Y = grid.nodes()
        zero = np.zeros(X.shape)
        cols = (X / c, Y / c, zero, zero, zero, zero)
        masked = np.zeros(X.shape, bool)
    flat = [a.ravel() for a in cols]
    rows = [tuple(a[i] for a in flat) + (bool(masked.ravel()[i]),) for i in range(flat[0].size)]
    meta = _meta("field", config, sols, grid={"x0": x0, "x1": x1, "nx": args.nx,
                                                "y0": y0, "y1": y1, "ny": args.ny},
                 masked_count=int(np.count_nonzero(masked)))
    _emit(args, FIELD_HEADER, rows, meta)
    return EXIT_OK


def _parse_seeds(text, config):
    """``"x,y;x,y"`` in physical units, ``auto`` or ``auto:N`` (vertical line of N seeds)."""
    H = config.height_h if config.domain == "channel" else config.period_l
    text = (text or "auto").strip()
    if text.startswith("auto"):
        n = 12
        if ":" in text:
            try:
                n = int(text.split(":", 1)[1])
            except ValueError:
                raise ConfigurationError(f"bad seed spec {text!r}") from None
        if n < 1:
            raise ConfigurationError("auto seed count must be >= 1")
        x = config.period_l / 2.0
        if config.singularities:
            x = (config.singularities[0].z0.real + config.period_l / 4.0) % config.period_l
        return [complex(x, H * (i + 0.5) / n) for i in range(n)]
    seeds = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        try:
            a, b = (float(t) for t in part.split(","))
        except ValueError:
            raise ConfigurationError(f"bad seed {part!r}; expected x,y") from None
        seeds.append(complex(a, b))
    if not seeds:
        raise ConfigurationError("no seeds given")
    return seeds


def cmd_streamlines(args) -> int:
    config = _config(args)
    sols = config.build()
    if not sols:
        raise ConfigurationError("streamlines need at least one singularity")
    c = config.scale_c
    seeds = _parse_seeds(args.seeds, config)
    lines = trace_streamlines(sols, [c * s for s in seeds], step_h=args.step, max_steps=args.max_steps)
    rows = []
    for i, ln in enumerate(lines):
        for j, p in enumerate(ln.points):
            rows.append((i, j, p.real / c, p.imag / c))
    extra = {"seeds": [{"x": s.real, "y": s.imag, "reason": ln.reason, "points": int(ln.points.size),
                        "closure_gap": ln.closure_gap / c if math.isfinite(ln.closure_gap) else None}
                       for s, ln in zip(seeds, lines)]}
    if config.domain == "channel":
        census = stagnation_census(sols)
        info = census.as_dict()
        # report positions in physical units
        info["x_line"] = census.x_line / c
        info["line_points"] = [[p.real / c, p.imag / c] for p in census.line_points]
        info["points"] = [[p.real / c, p.imag / c] for p in census.points]
        extra["census"] = info
        print(f"stagnation points on x={census.x_line / c:.6g}: {census.line_count} "
              f"(centres {census.centres}, saddles {census.saddles}, "
              f"midline u sign changes {census.midline_u_changes})", file=sys.stderr)
    _emit(args, STREAM_HEADER, rows, _meta("streamlines", config, sols, **extra))
    return EXIT_OK


def cmd_coeffs(args) -> int:
    from stokes_lattice.channel import build_channel_solution, coefficient_terms

    config = _config(args)
    if config.domain != "channel" or len(config.singularities) != 1:
        raise ConfigurationError("coeffs needs a channel config with exactly one singularity")
    if args.n_max < 1:
        raise ConfigurationError("--n-max must be >= 1")
    problem = config.canonical()
    spec = problem.specs[0]
    sol = build_channel_solution(spec.kind, spec.mu, spec.z0, problem.geometry, config.tolerance)
    if sol.N < args.n_max:
        sol = build_channel_solution(spec.kind, spec.mu, spec.z0, problem.geometry, config.tolerance,
                                     N=args.n_max)
    zeta = complex(args.zeta)
    terms = coefficient_terms(sol, zeta, args.n_max)
    rows = list(zip(terms.n, terms.fh, terms.gk))
    meta = _meta("coeffs", config, [sol], zeta=[zeta.real, zeta.imag], n_max=args.n_max,
                 slope_fh=terms.slope("fh"), slope_gk=terms.slope("gk"))
    for key in ("slope_fh", "slope_gk"):
        if not math.isfinite(meta[key]):
            meta[key] = None
    _emit(args, COEFF_HEADER, rows, meta)
    return EXIT_OK


def _report_out(args, command, config, sols, reports, extra=None):
    ok = all(r.passed for r in reports)
    if args.json:
        meta = _meta(command, config, sols, passed=ok, **(extra or {}))
        text = json.dumps({"meta": meta, "rows": [r.as_dict() for r in reports]}, indent=1,
                          default=_num) + "\n"
    else:
        text = "".join(r.line() + "\n" for r in reports)
        text += ("all checks passed\n" if ok else
                 f"{sum(not r.passed for r in reports)} check(s) failed\n")
    _write(args.out, text)
    return EXIT_OK if ok else EXIT_CHECK


def cmd_verify(args) -> int:
    from stokes_lattice.validation import force_flux_check, validation_battery

    config = _config(args)
    sols = config.build()
    if args.inject_fault:
        sols = _inject_fault(sols)
    reports = []
    if sols:
        reports.extend(validation_battery(sols, seed=args.seed))
        for s in sols:
            reports.extend(force_flux_check(s, eta=config.eta))
    return _report_out(args, "verify", config, sols, reports)


def cmd_compare(args) -> int:
    from stokes_lattice.transform import ORACLE_KINDS, assemble_and_solve
    from stokes_lattice.validation import cross_method_compare, oracle_checks

    config = _config(args)
    if config.domain != "channel":
        raise ConfigurationError("compare needs a channel config")
    sols = config.build()
    problem = config.canonical()
    reports = []
    for spec, sol in zip(problem.specs, sols):
        if spec.kind not in ORACLE_KINDS:
            raise ConfigurationError(f"the transform oracle supports {[k.value for k in ORACLE_KINDS]}, "
                                     f"got {spec.kind.value}")
        system = assemble_and_solve(spec.kind, spec.mu, spec.z0, problem.geometry, M=args.modes)
        rep = cross_method_compare(sol, system, tolerance=args.compare_tol)
        reports.append(dataclasses.replace(rep, name=f"cross_method[{spec.kind.value}]"))
        reports.extend(oracle_checks(system, seed=args.seed))
    return _report_out(args, "compare", config, sols, reports, {"modes": args.modes})


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stokes-lattice",
                                description="Periodic arrays of Stokes singularities in a channel or "
                                            "above a wall.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, fmt=True):
        sp.add_argument("--config", required=True, help="JSON problem file")
        sp.add_argument("--out", default="-", help="output file (default stdout)")
        sp.add_argument("--tol", type=float, default=None, help="override the build tolerance")
        if fmt:
            sp.add_argument("--format", choices=("csv", "json"), default="csv")

    sp = sub.add_parser("field", help="sample fields on a grid")
    common(sp)
    sp.add_argument("--nx", type=int, default=101)
    sp.add_argument("--ny", type=int, default=51)
    for name in ("x0", "x1", "y0", "y1"):
        sp.add_argument(f"--{name}", type=float, default=None, help="grid extent (physical units)")
    sp.set_defaults(func=cmd_field)

    sp = sub.add_parser("streamlines", help="trace streamlines and count stagnation points")
    common(sp)
    sp.add_argument("--seeds", default="auto",
                    help='"x,y;x,y" in physical units, "auto" or "auto:N"')
    sp.add_argument("--step", type=float, default=1e-2, help="arc-length step (canonical units)")
    sp.add_argument("--max-steps", type=int, default=20000)
    sp.set_defaults(func=cmd_streamlines)

    sp = sub.add_parser("coeffs", help="Laurent term magnitudes at a probe point")
    common(sp)
    sp.add_argument("--zeta", type=complex, default=complex(math.exp(-1.0)),
                    help="probe point in the annulus (Python complex literal)")
    sp.add_argument("--n-max", type=int, default=60)
    sp.set_defaults(func=cmd_coeffs)

    sp = sub.add_parser("verify", help="run the validation battery")
    common(sp, fmt=False)
    sp.add_argument("--json", action="store_true", help="machine-readable report")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("compare", help="series solution against the transform oracle")
    common(sp, fmt=False)
    sp.add_argument("--json", action="store_true", help="machine-readable report")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--modes", type=int, default=24, help="Chebyshev modes per side function")
    sp.add_argument("--compare-tol", type=float, default=1e-6)
    sp.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    log.debug("workers: %d", worker_count())
    try:
        return args.func(args)
    except (ConfigurationError, DomainError, ProximityError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (AccuracyNotMetError, ConvergenceError) as exc:
        achieved = getattr(exc, "achieved", None)
        tail = f" (achieved {achieved:.3e})" if achieved is not None else ""
        print(f"accuracy not met: {exc}{tail}", file=sys.stderr)
        return EXIT_ACCURACY
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
