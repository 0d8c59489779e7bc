"""Command-line entry point.

Exit codes: 0 success, 1 a check failed, 2 usage or configuration error.
Every JSON report carries ``schema_version``.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import chern_simons as cs
from . import dual_quadratic as dq
from . import g_pointwise as gp
from . import grid_fields as gf
from . import tilde_dual as td
from .gradcheck import STEPS, directional_check, random_direction, smooth_field
from .lie_su2 import verify_identities
from .report import SCHEMA_VERSION, RunReport, dumps


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _floats(text: str, n: int | None = None) -> list[float]:
    try:
        vals = [float(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}")
    if n is not None and len(vals) != n:
        raise argparse.ArgumentTypeError(f"expected {n} numbers, got {len(vals)}")
    return vals


def parse_gauge_spec(text: str) -> list[tuple[int, int, float]]:
    """'axis:J:amp, ...' -> factors of g(x) = prod exp(amp * x_axis * E_J), 1-based axis and J."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            a, J, amp = part.split(":")
            a, J, amp = int(a), int(J), float(amp)
        except ValueError:
            raise UsageError(f"bad gauge factor {part!r}; expected axis:J:amplitude")
        if a not in (1, 2, 3) or J not in (1, 2, 3):
            raise UsageError(f"gauge factor {part!r}: axis and J must be 1, 2 or 3")
        out.append((a, J, amp))
    if not out:
        raise UsageError("empty gauge spec")
    return out


def _emit(obj, out: str | None):
    text = dumps(obj) + "\n"
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _workers(args) -> int:
    w = getattr(args, "workers", None)
    return w if w else (os.cpu_count() or 1)


# -- subcommands ------------------------------------------------------------------

def cmd_algebra_verify(args) -> int:
    rep = verify_identities(n_random=args.n_random, seed=args.seed)
    _emit(rep.to_dict(), args.out)
    return 0 if rep.passed else 1


def cmd_cs_eval(args) -> int:
    A = gf.read_snapshot(args.field, args.scheme)
    r = cs.cs_report(A)
    _emit({"schema_version": SCHEMA_VERSION, **r.to_dict()}, args.out)
    return 0


def cmd_cs_cubic_demo(args) -> int:
    grid = gf.BoxGrid.unit(args.n, args.scheme)
    fit = cs.cubic_demo(grid, args.t)
    w = csv.writer(sys.stdout)
    w.writerow(["t", "action"])
    for t, s in zip(fit.t, fit.actions):
        w.writerow([repr(float(t)), repr(float(s))])
    sys.stdout.write("\n")
    w.writerow(["t3_coefficient", "expected_8_int_phi3", "rel_error", "fit_residual"])
    w.writerow([repr(fit.t3), repr(fit.expected_t3), repr(fit.rel_error), repr(fit.max_residual)])
    return 0 if fit.rel_error < args.tol else 1


def cmd_flatness(args) -> int:
    rep = RunReport("flatness")
    if args.field:
        A = gf.read_snapshot(args.field, args.scheme)
        linf, l2 = cs.residual_norms(cs.flatness_residual(A))
        rep.extra.update({"residual_linf": linf, "residual_l2": l2})
        _emit(rep.to_dict(), args.out)
        return 0
    factors = parse_gauge_spec(args.gauge)
    levels = []
    for n in args.levels:
        grid = gf.BoxGrid.unit(n, args.scheme)
        A = gf.pure_gauge_field(grid, gf.gauge_from_factors(grid, factors))
        linf, l2 = cs.residual_norms(cs.flatness_residual(A))
        levels.append({"n": n, "h": float(grid.h[0]), "residual_linf": linf, "residual_l2": l2})
    orders = [math.log(a["residual_linf"] / b["residual_linf"]) / math.log(a["h"] / b["h"])
              for a, b in zip(levels, levels[1:])]
    rep.extra.update({"levels": levels, "observed_orders": orders})
    if orders:
        rep.check("observed_order_shortfall", max(0.0, args.min_order - min(orders)), 0.0,
                  f"min observed order {min(orders):.3f} vs required {args.min_order}")
    _emit(rep.to_dict(), args.out)
    return 0 if rep.passed else 1


def _quad_problem(args) -> tuple[gf.CoeffField, dq.QuadDualProblem]:
    lam = gf.read_snapshot(args.lambda_, args.scheme)
    Abar = gf.read_snapshot(args.abar, args.scheme)
    Ab = gf.BoundaryField.trace(gf.read_snapshot(args.ab, args.scheme))
    return lam, dq.QuadDualProblem(lam.grid, Abar, Ab, args.k)


def cmd_dual_eval(args) -> int:
    lam, prob = _quad_problem(args)
    A, info = dq.dtp_map(lam, prob, return_info=True)
    G = dq.dual_gradient(lam, prob)
    _emit({"schema_version": SCHEMA_VERSION, "S": dq.dual_action(lam, prob),
           "gradient_linf": G.linf(),
           "dtp_flatness_linf": cs.residual_norms(cs.flatness_residual(A))[0],
           "dtp_residual": info.residual, "max_cond_K": info.max_cond}, args.out)
    return 0


def cmd_dual_gradcheck(args) -> int:
    rng = np.random.default_rng(args.seed)
    grid = gf.BoxGrid.unit(args.n, args.scheme)
    rep = RunReport("dual-gradcheck")
    errs = {"cs": [], "dual": [], "tilde": []}
    A = smooth_field(grid, rng, 0.5)
    for _ in range(args.directions):
        v = random_direction(grid, rng, interior_only=True)
        errs["cs"].append(directional_check(cs.cs_action, A, v, cs.cs_gradient(A)).rel_error)
    prob = dq.QuadDualProblem(grid, smooth_field(grid, rng, 0.5),
                              gf.BoundaryField.trace(smooth_field(grid, rng, 0.5)), args.k)
    lam = smooth_field(grid, rng, 0.1)
    G = dq.dual_gradient(lam, prob)
    for _ in range(args.directions):
        v = random_direction(grid, rng)
        errs["dual"].append(directional_check(lambda x: dq.dual_action(x, prob), lam, v, G).rel_error)
    params = gp.GParams(2.0, 0.5)
    Ab = gf.BoundaryField.trace(smooth_field(grid, rng, 0.5))
    lam = smooth_field(grid, rng, 0.05)
    G = td.tilde_gradient(lam, params, Ab)
    for _ in range(args.directions):
        v = random_direction(grid, rng)
        errs["tilde"].append(directional_check(lambda x: td.tilde_action(x, params, Ab), lam, v, G).rel_error)
    for k, e in errs.items():
        rep.check(f"{k}_gradient_max_rel_error", max(e), args.tol)
    rep.extra["steps"] = list(STEPS)
    _emit(rep.to_dict(), args.out)
    return 0 if rep.passed else 1


def _params(args) -> gp.GParams:
    if args.ell is None:
        return gp.GParams.certified(args.alpha, args.variant)
    return gp.GParams(args.alpha, args.ell, args.variant)


def cmd_g_eval(args) -> int:
    params = _params(args)
    lam = np.array(args.lam).reshape(3, 3)
    mu = np.array(args.mu).reshape(3, 3)
    gv = gp.g_value(lam, mu, params)
    w = gp.witness_lower_bound(lam, mu, params)
    out = {"schema_version": SCHEMA_VERSION, "alpha": params.alpha, "ell": params.ell, **gv.to_dict(),
           "witness_case": w.case, "witness_value": w.value}
    if params.alpha == 2:
        out["min_eig"] = float(gp.quadratic_batch(lam, mu, params.ell).min_eig[0])
    _emit(out, args.out)
    return 0


def cmd_g_scan(args) -> int:
    params = _params(args)
    rep = gp.certify_bounds(params, args.samples, args.seed, workers=_workers(args))
    samples = rep.extra.pop("samples")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lam_norm", "mu_norm", "g", "bound", "slack"])
            for s in samples:
                w.writerow([repr(s["lam_norm"]), repr(s["mu_norm"]), repr(float(max(s["g"], s["witness"]))),
                            repr(s["bound"]), repr(s["slack"])])
    _emit(rep.to_dict(), args.out)
    return 0 if rep.passed else 1


def cmd_field_info(args) -> int:
    hdr = gf.read_header(args.file)
    _emit({"schema_version": SCHEMA_VERSION, **hdr}, args.out)
    return 0


def cmd_field_export(args) -> int:
    f = gf.read_snapshot(args.file, args.scheme)
    if args.out in (None, "-"):
        gf.export_csv(f, sys.stdout)
    else:
        with open(args.out, "w", newline="") as fh:
            gf.export_csv(f, fh)
    return 0


# -- dual-minimize configuration ---------------------------------------------------------

CONFIG_SCHEMA = {
    "grid": {"n": int, "extent": str, "origin": str, "scheme": str},
    "potential": {"alpha": float, "ell": float},
    "boundary": {"source": str, "gauge": str, "snapshot": str},
    "start": {"seed": int, "amplitude": float},
    "solver": {"max_iters": int, "grad_tol": float, "rel_grad_tol": float, "memory": int,
               "constraint_radius": float},
    "output": {"dir": str},
}

CONFIG_DEFAULTS = {
    "grid": {"n": "8", "extent": "1 1 1", "origin": "0 0 0", "scheme": "sbp42"},
    "potential": {"alpha": "2", "ell": "0.5"},
    "boundary": {"source": "zero", "gauge": "", "snapshot": ""},
    "start": {"seed": "0", "amplitude": "0.01"},
    "solver": {"max_iters": "500", "grad_tol": "1e-10", "rel_grad_tol": "0", "memory": "10",
               "constraint_radius": "1.4"},
    "output": {"dir": "dual-minimize-out"},
}


def load_run_config(path: str | None, overrides: list[str]) -> dict:
    """Read an INI file, apply ``section.key=value`` overrides, validate against CONFIG_SCHEMA."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.read_dict(CONFIG_DEFAULTS)
    if path:
        user = configparser.ConfigParser(interpolation=None)
        if not user.read(path):
            raise UsageError(f"cannot read config {path}")
        for sec in user.sections():
            if sec not in CONFIG_SCHEMA:
                raise UsageError(f"unknown config section [{sec}]")
            for key, val in user[sec].items():
                if key not in CONFIG_SCHEMA[sec]:
                    raise UsageError(f"unknown config key {sec}.{key}")
                cp[sec][key] = val
    for ov in overrides:
        if "=" not in ov or "." not in ov.split("=", 1)[0]:
            raise UsageError(f"override {ov!r} must look like section.key=value")
        lhs, val = ov.split("=", 1)
        sec, key = lhs.split(".", 1)
        if sec not in CONFIG_SCHEMA or key not in CONFIG_SCHEMA[sec]:
            raise UsageError(f"unknown config key {lhs}")
        cp[sec][key] = val
    cfg = {}
    for sec, keys in CONFIG_SCHEMA.items():
        cfg[sec] = {}
        for key, typ in keys.items():
            raw = cp[sec][key]
            try:
                cfg[sec][key] = typ(raw)
            except ValueError:
                raise UsageError(f"{sec}.{key}: cannot parse {raw!r} as {typ.__name__}")
    g = cfg["grid"]
    try:
        g["extent"] = _floats(g["extent"], 3)
        g["origin"] = _floats(g["origin"], 3)
    except argparse.ArgumentTypeError as e:
        raise UsageError(f"grid: {e}")
    for sec, key in (("grid", "n"), ("potential", "ell"), ("solver", "grad_tol"), ("solver", "memory"),
                     ("solver", "constraint_radius")):
        if not cfg[sec][key] > 0:
            raise UsageError(f"{sec}.{key} must be positive")
    if min(g["extent"]) <= 0:
        raise UsageError("grid.extent must be positive")
    if cfg["potential"]["alpha"] < 2:
        raise UsageError("potential.alpha must be >= 2")
    if cfg["potential"]["alpha"] == 2 and not cfg["solver"]["constraint_radius"] < 1.5:
        raise UsageError("solver.constraint_radius must be < 3/2 when alpha = 2")
    if cfg["boundary"]["source"] not in ("zero", "gauge", "snapshot"):
        raise UsageError("boundary.source must be zero, gauge or snapshot")
    return cfg


def build_boundary(cfg: dict, grid: gf.BoxGrid) -> tuple[gf.BoundaryField, gf.CoeffField | None]:
    b = cfg["boundary"]
    if b["source"] == "zero":
        return gf.BoundaryField.zeros(grid), None
    if b["source"] == "gauge":
        A = gf.pure_gauge_field(grid, gf.gauge_from_factors(grid, parse_gauge_spec(b["gauge"])))
        return gf.BoundaryField.trace(A), A
    A = gf.read_snapshot(b["snapshot"], grid.scheme)
    if not A.grid.compatible(grid):
        raise UsageError("boundary snapshot grid does not match [grid]")
    return gf.BoundaryField.trace(A), A


def cmd_dual_minimize(args) -> int:
    cfg = load_run_config(args.config, args.set or [])
    g = cfg["grid"]
    grid = gf.BoxGrid(g["origin"], g["extent"], (g["n"],) * 3, g["scheme"])
    params = gp.GParams(cfg["potential"]["alpha"], cfg["potential"]["ell"])
    Ab, source_field = build_boundary(cfg, grid)
    rng = np.random.default_rng(cfg["start"]["seed"])
    lam0 = gf.CoeffField.random(grid, rng, cfg["start"]["amplitude"])
    s = cfg["solver"]
    opts = td.MinimizeOptions(max_iters=s["max_iters"], grad_tol=s["grad_tol"], rel_grad_tol=s["rel_grad_tol"],
                              memory=s["memory"], constraint_radius=s["constraint_radius"])
    try:
        lam, rep = td.minimize(lam0, params, Ab, opts)
    except td.InfeasibleStart as e:
        print(f"dual-minimize: {e}", file=sys.stderr)
        return 1
    out = Path(args.outdir or cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    gf.write_snapshot(out / "lambda.csdf", lam)
    gf.write_snapshot(out / "primal.csdf", td.recover_primal(lam, params))
    with open(out / "iterations.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "value", "grad_linf"])
        for it, v, gl in rep.history:
            w.writerow([it, repr(float(v)), repr(float(gl))])
    d = rep.to_dict()
    d.pop("history")
    body = {"schema_version": SCHEMA_VERSION, "config": cfg, "report": d}
    if source_field is not None:
        body["source_flatness_linf"] = cs.residual_norms(cs.flatness_residual(source_field))[0]
    (out / "report.json").write_text(dumps(body) + "\n")
    _emit(body, args.out)
    return 0 if rep.converged and rep.monotone else 1


# -- parser --------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="csdual", description="Chern-Simons dual variational toolkit.")
    p.add_argument("--workers", type=int, default=None,
                   help="worker threads for sampling runs (default: available CPUs); results do not depend on it")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def add(name, func, help_, epilog=None):
        sp = sub.add_parser(name, help=help_, description=help_, epilog=epilog,
                            formatter_class=argparse.RawDescriptionHelpFormatter)
        sp.set_defaults(func=func)
        sp.add_argument("--out", default=None, help="write JSON here instead of stdout")
        return sp

    def scheme(sp):
        sp.add_argument("--scheme", choices=gf.SCHEMES, default="sbp42", help="derivative stencils")

    sp = add("algebra-verify", cmd_algebra_verify, "check the su(2) identities and report the sign convention")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--n-random", type=int, default=100)

    sp = add("cs-eval", cmd_cs_eval, "Chern-Simons action and flatness residual of a snapshot")
    sp.add_argument("--field", required=True)
    scheme(sp)

    sp = add("cs-cubic-demo", cmd_cs_cubic_demo, "cubic growth of the action along t*phi*I",
             epilog="CSV output: a block with columns t,action, a blank line, then "
                    "t3_coefficient,expected_8_int_phi3,rel_error,fit_residual.")
    sp.add_argument("--n", type=int, default=33)
    sp.add_argument("--t", type=_floats, default=[-2.0, -1.0, 1.0, 2.0], help="comma-separated t values")
    sp.add_argument("--tol", type=float, default=0.01, help="relative tolerance on the t^3 coefficient")
    scheme(sp)

    sp = add("flatness", cmd_flatness, "flatness residual of a snapshot, or a refinement study of a pure gauge")
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--field")
    src.add_argument("--gauge", help="factors axis:J:amp,... of g(x) = prod exp(amp x_axis E_J)")
    sp.add_argument("--levels", type=lambda s: [int(v) for v in _floats(s)], default=[9, 17, 33])
    sp.add_argument("--min-order", type=float, default=1.9)
    scheme(sp)

    sp = add("dual-eval", cmd_dual_eval, "quadratic-potential dual functional, gradient and DtP flatness")
    sp.add_argument("--lambda", dest="lambda_", required=True)
    sp.add_argument("--abar", required=True)
    sp.add_argument("--ab", required=True, help="snapshot whose boundary trace is the datum A^(b)")
    sp.add_argument("--k", type=float, required=True)
    scheme(sp)

    sp = add("dual-gradcheck", cmd_dual_gradcheck, "finite-difference check of the three analytic gradients")
    sp.add_argument("--n", type=int, default=9)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--directions", type=int, default=10)
    sp.add_argument("--k", type=float, default=2.0)
    sp.add_argument("--tol", type=float, default=1e-5)
    scheme(sp)

    def gargs(sp):
        sp.add_argument("--alpha", type=float, required=True)
        sp.add_argument("--ell", type=float, default=None, help="default: the certified constant for alpha")
        sp.add_argument("--variant", choices=("auto", "general"), default="auto")

    sp = add("g-eval", cmd_g_eval, "pointwise value g(lam, mu) with its maximizer")
    sp.add_argument("--lambda", dest="lam", type=lambda s: _floats(s, 9), required=True, help="9 numbers, row-major")
    sp.add_argument("--mu", type=lambda s: _floats(s, 9), required=True, help="9 numbers, row-major")
    gargs(sp)

    sp = add("g-scan", cmd_g_scan, "certify the pointwise lower bound on random samples",
             epilog="CSV columns (with --csv): lam_norm,mu_norm,g,bound,slack.")
    gargs(sp)
    sp.add_argument("--samples", type=int, default=200)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--csv", default=None)

    sp = add("dual-minimize", cmd_dual_minimize, "minimize the dual functional and recover the primal field",
             epilog="Config sections and keys (INI):\n"
                    "  [grid] n, extent, origin, scheme\n"
                    "  [potential] alpha, ell\n"
                    "  [boundary] source = zero | gauge | snapshot, gauge = axis:J:amp,..., snapshot = path\n"
                    "  [start] seed, amplitude\n"
                    "  [solver] max_iters, grad_tol, rel_grad_tol, memory, constraint_radius\n"
                    "  [output] dir\n"
                    "Outputs in dir: lambda.csdf, primal.csdf, report.json, iterations.csv (iter,value,grad_linf).")
    sp.add_argument("--config", default=None)
    sp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config key")
    sp.add_argument("--outdir", default=None)

    sp = add("field-info", cmd_field_info, "print a snapshot header")
    sp.add_argument("file")

    sp = add("field-export", cmd_field_export, "export a snapshot as CSV",
             epilog="CSV columns: x1,x2,x3,Z,p,value (Z and p 1-based).")
    sp.add_argument("file")
    scheme(sp)
    return p


# options whose values may start with a minus sign
_LIST_OPTIONS = ("--t", "--lambda", "--mu", "--levels")


def _glue_list_options(argv: list[str]) -> list[str]:
    out, i = [], 0
    while i < len(argv):
        if argv[i] in _LIST_OPTIONS and i + 1 < len(argv):
            out.append(f"{argv[i]}={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def run(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parser.parse_args(_glue_list_options(argv))
        return args.func(args)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return 2
    except (gf.GridTooSmall, gf.GridMismatch, FileNotFoundError, ValueError) as e:
        print(f"csdual: {e}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
