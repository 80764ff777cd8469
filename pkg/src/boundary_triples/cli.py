"""Command line entry point: ``boundary-triples <task> -m model.json [options]``.

Exit codes: 0 success, 1 runtime failure, 2 verification failure, 3 bad config.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from typing import Optional, Sequence

import numpy as np

from .config import build_graph_from_config, build_model, load_config
from .errors import ConfigurationError, ContractError, NearDirichletSpectrum
from .report import (CONVERGENCE_HEADER, DTN_HEADER, SPECTRUM_HEADER, build_report,
                     write_report)

EXIT_OK, EXIT_RUNTIME, EXIT_VERIFY, EXIT_CONFIG = 0, 1, 2, 3


def parse_robin(text: str, m: int) -> np.ndarray:
    """``identity``, ``zero``, a real scalar, or a JSON matrix (rows of numbers or [re, im])."""
    key = text.strip().lower()
    if key == "identity":
        return np.eye(m)
    if key == "zero":
        return np.zeros((m, m))
    try:
        return float(key) * np.eye(m)
    except ValueError:
        pass
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"cannot parse Robin matrix {text!r}", path="--robin") from exc
    arr = np.array([[complex(*v) if isinstance(v, list) else v for v in row] for row in data],
                   dtype=complex)
    if arr.shape != (m, m):
        raise ConfigurationError(f"Robin matrix must be {m}x{m}", path="--robin")
    if np.max(np.abs(arr - arr.conj().T)) > 1e-12:
        raise ConfigurationError("Robin matrix must be Hermitian", path="--robin")
    return arr


def _z_points(args, default):
    if args.z:
        return [complex(s.replace(" ", "")) for s in args.z]
    if args.grid:
        a, b, n = float(args.grid[0]), float(args.grid[1]), int(args.grid[2])
        return [complex(x, args.imag) for x in np.linspace(a, b, n)]
    return default


def _rectangle(n=20):
    """``n`` points on the boundary of the rectangle [-4, 12] x [0.5, 3]."""
    k = n // 4
    pts = ([complex(x, 0.5) for x in np.linspace(-4, 12, k, endpoint=False)]
           + [complex(12, y) for y in np.linspace(0.5, 3, k, endpoint=False)]
           + [complex(x, 3) for x in np.linspace(12, -4, k, endpoint=False)]
           + [complex(-4, y) for y in np.linspace(3, 0.5, n - 3 * k, endpoint=False)])
    return pts


def _check(name, anchor, residual, tol, **detail):
    from .core import Check

    return Check.measured(name, anchor, residual, tol, **detail)


# --------------------------------------------------------------------------
# tasks


def task_verify(cfg, model, args):
    from .core import VerifyOptions, verify_suite

    rep = verify_suite(model, VerifyOptions(seed=args.seed, samples=args.samples))
    return rep.checks, {}, {"options": {"seed": args.seed, "samples": args.samples}}


def task_dtn(cfg, model, args):
    from .core import dtn

    rows, points = [], []
    for z in _z_points(args, [complex(-1.0)]):
        try:
            L = dtn(model, z).entries
        except NearDirichletSpectrum as exc:
            points.append({"z": z, "status": "near-dirichlet-spectrum",
                           "distance": exc.distance})
            continue
        points.append({"z": z, "status": "generic"})
        for i in range(L.shape[0]):
            for j in range(L.shape[1]):
                rows.append({"z_re": z.real, "z_im": z.imag, "row": i, "col": j,
                             "entry_re": float(L[i, j].real), "entry_im": float(L[i, j].imag)})
    return [], {"dtn": {"header": DTN_HEADER, "rows": rows}}, {"points": points}


def task_spectrum(cfg, model, args):
    from .core import robin, spectral_relation_scan

    rb = robin(model, parse_robin(args.robin, model.boundary_dim))
    window = tuple(args.window)
    rows = []
    checks = []
    extra = {}
    if args.method in ("dtn", "both"):
        res = spectral_relation_scan(model, rb, window, direct=args.method == "both")
        for lam, k in res.dtn_roots:
            rows.append({"eigenvalue": lam, "multiplicity": k, "method": "dtn"})
        if args.method == "both":
            for lam, k in res.direct_eigenvalues:
                rows.append({"eigenvalue": lam, "multiplicity": k, "method": "direct"})
            chk = _check("krein.spectral_correspondence", "thm:krein.dn", res.max_gap, 1e-6,
                         matched=len(res.matched))
            if not res.ok:
                chk.status = "fail"
            checks.append(chk)
            extra["excluded_by_hypothesis"] = [{"eigenvalue": lam, "multiplicity": k}
                                               for lam, k in res.dirichlet_points_excluded]
    else:
        for lam, k in model.robin_spectrum_direct(rb.btilde, window):
            rows.append({"eigenvalue": lam, "multiplicity": k, "method": "direct"})
    for i, r in enumerate(rows):
        r["index"] = i
    extra["robin"] = {"btilde_re": rb.btilde.real, "btilde_im": rb.btilde.imag}
    extra["window"] = list(window)
    return checks, {"spectrum": {"header": SPECTRUM_HEADER, "rows": rows}}, extra


def task_krein(cfg, model, args):
    from .core import krein_residual, robin

    rb = robin(model, parse_robin(args.robin, model.boundary_dim))
    h = model.constant(1.0)
    rows = []
    worst = 0.0
    for z in _z_points(args, _rectangle(20)):
        r = krein_residual(model, z, rb, h)
        worst = max(worst, r)
        rows.append({"z_re": z.real, "z_im": z.imag, "residual": r})
    checks = [_check("krein.formula", "thm:krein", worst, 1e-7, points=len(rows))]
    return checks, {"krein": {"header": ["z_re", "z_im", "residual"], "rows": rows}}, {
        "probe": "constant 1"}


def task_dirac(cfg, model, args):
    from .dirac import dirac_suite, require_interval

    if cfg.type == "discrete":
        raise ConfigurationError("dirac requires a single-interval model", path="type")
    require_interval(getattr(model, "_inner", model))
    rep = dirac_suite(getattr(model, "_inner", model), seed=args.seed)
    sign = rep.by_name("q_identity.sign").detail.get("sign")
    return rep.checks, {}, {"q_identity_sign": sign}


def task_converge(cfg, model, args):
    from .discrete import convergence_study

    graph = build_graph_from_config(cfg)
    scheme = args.scheme or (cfg.discretization.scheme if cfg.discretization else "fem-p1")
    table = convergence_study(graph, args.z_value, args.levels, scheme, args.flux)
    rows = [{"n": r.n, "h": r.h, "error": r.error, "rate": r.rate} for r in table.rows]
    checks = []
    errs = [r.error for r in table.rows]
    decreasing = all(b < a for a, b in zip(errs, errs[1:]))
    checks.append(_check("discrete.error_decreasing", "lem:dn", 0.0 if decreasing else 1.0, 0.0))
    if scheme == "fem-p1" and table.rates:
        worst = max(abs(r - 2.0) for r in table.rates)
        checks.append(_check("discrete.convergence_rate", "lem:dn", worst, 0.3,
                             rates=table.rates, expected=2.0))
    return checks, {"convergence": {"header": CONVERGENCE_HEADER, "rows": rows}}, {
        "scheme": scheme, "flux": args.flux, "z": args.z_value}


TASKS = {
    "verify": task_verify,
    "dtn": task_dtn,
    "spectrum": task_spectrum,
    "krein": task_krein,
    "dirac": task_dirac,
    "converge": task_converge,
}


# --------------------------------------------------------------------------
# argument parsing


def _window(text):
    return float(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="boundary-triples",
                                description="Boundary-triple computations for Laplacians on "
                                            "intervals, metric graphs and discretizations.")
    sub = p.add_subparsers(dest="task", required=True)

    def common(sp):
        sp.add_argument("-m", "--model", required=True, help="model config (JSON)")
        sp.add_argument("-o", "--output", default="-", help="output path ('-' for stdout)")
        sp.add_argument("--format", choices=("json", "csv"), default="json")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--timings", action="store_true",
                        help="add wall-clock timings (makes output non-deterministic)")
        return sp

    v = common(sub.add_parser("verify", help="run the lemma verification suite"))
    v.add_argument("--samples", type=int, default=20)

    for name, helptext in (("dtn", "DtN matrices over a z-grid"),
                           ("krein", "Krein resolvent-formula residuals")):
        sp = common(sub.add_parser(name, help=helptext))
        sp.add_argument("--z", action="append", help="complex point, e.g. '1+2j' (repeatable)")
        sp.add_argument("--grid", nargs=3, metavar=("RE_MIN", "RE_MAX", "N"))
        sp.add_argument("--imag", type=float, default=0.0, help="imaginary part for --grid")
        if name == "krein":
            sp.add_argument("--robin", default="zero")

    s = common(sub.add_parser("spectrum", help="Robin eigenvalues"))
    s.add_argument("--robin", default="zero")
    s.add_argument("--window", nargs=2, type=_window, required=True, metavar=("A", "B"))
    s.add_argument("--method", choices=("dtn", "direct", "both"), default="both")

    common(sub.add_parser("dirac", help="Dirac-operator suite (single interval only)"))

    c = common(sub.add_parser("converge", help="discretization convergence study"))
    c.add_argument("--levels", type=int, nargs="+", default=[8, 16, 32])
    c.add_argument("--z", dest="z_value", type=float, default=-1.0)
    c.add_argument("--scheme", choices=("dec-lumped", "fem-p1"))
    c.add_argument("--flux", choices=("naive", "consistent"), default="naive")
    return p


def run(argv: Optional[Sequence[str]] = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = load_config(args.model)
        model = build_model(cfg)
        t0 = time.perf_counter()
        checks, tables, extra = TASKS[args.task](cfg, model, args)
        timings = {"total_seconds": time.perf_counter() - t0} if args.timings else None
        report = build_report(args.task, cfg.echo(), checks, tables, extra, timings)
        text = write_report(report, args.output, args.format)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_CONFIG
    except (ContractError, ArithmeticError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=stderr)
        return EXIT_RUNTIME
    if args.output in (None, "-"):
        stdout.write(text)
    return EXIT_VERIFY if report["status"] == "fail" else EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
