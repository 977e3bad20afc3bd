"""Command-line driver.

Exit codes: 0 success, 2 hypotheses not met, 3 numeric failure, 4 bad
configuration or arguments.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import characteristics as ch
from . import localize as loc
from . import oracles
from . import regularity as reg
from .classify import (Label, PathologicalField, Verdict, check_hypotheses, classify_boundary,
                       exceptional_points)
from .config import SCHEMA_VERSION, ConfigError, ProblemConfig, load_config
from .expr import ExprDomainError, ExprError

EXIT_OK, EXIT_HYPOTHESES, EXIT_NUMERIC, EXIT_CONFIG = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _header(cmd: str) -> str:
    return f"# transport2d schema_version={SCHEMA_VERSION} subcommand={cmd}\n"


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def _point_arg(text: str) -> tuple[float, float]:
    try:
        x, y = (float(t) for t in text.split(","))
    except ValueError:
        raise ConfigError(f"--at expects x,y (got {text!r})") from None
    return x, y


class _Run:
    def __init__(self, args):
        self.args = args
        self.cfg: ProblemConfig = load_config(args.config) if getattr(args, "config", None) else None
        if self.cfg is not None:
            self.domain = self.cfg.domain()
            self.u = self.cfg.velocity()
            self.l = self.cfg.rhs()
            self.W = self.cfg.W
        self.tol = args.tol if getattr(args, "tol", None) else (self.cfg.trace_tol if self.cfg else 1e-9)
        self.t_max = args.tmax if getattr(args, "tmax", None) else (self.cfg.t_max if self.cfg else 40.0)
        self.threads = max(1, getattr(args, "threads", 1) or 1)

    def problem(self) -> ch.TransportProblem:
        return ch.TransportProblem(self.domain, self.u, self.l, self.W)


# ---------------------------------------------------------------- commands

def _classification_table(d, u, W) -> tuple[str, object]:
    c = classify_boundary(d, u, W)
    rows = []
    for ec in c.edges:
        for iv in ec.intervals:
            rows.append((ec.index, _fmt(iv.s0), _fmt(iv.s1), iv.label.value, ""))
        for r in ec.roots:
            rows.append((ec.index, _fmt(r.s), _fmt(r.s), "root", f"multiplicity={r.multiplicity}"))
    return _csv(rows, ("edge", "s0", "s1", "label", "note")), c


def cmd_classify(run: _Run) -> tuple[int, str]:
    text, _ = _classification_table(run.domain, run.u, run.W)
    return EXIT_OK, text


def _check_report(d, u, W):
    c = classify_boundary(d, u, W)
    E = exceptional_points(c, d, u)
    return check_hypotheses(d, u, W, c, E), E


def _fmt_pt(p) -> str:
    return f"({p[0]:.6g}, {p[1]:.6g})"


def cmd_check(run: _Run) -> tuple[int, str]:
    rep, E = _check_report(run.domain, run.u, run.W)
    lines = [f"boundary_verdict: {rep.boundary_verdict.value}",
             f"verdict: {rep.verdict.value}",
             f"gradient_bound: sup|grad u| = {rep.grad_bound.sup_norm:.6g}, "
             f"threshold = {rep.grad_bound.threshold:.6g}, holds = {rep.grad_bound.holds}"]
    for pc in rep.points:
        lines.append(f"point {_fmt_pt(pc.m)}: simple_root = {pc.simple_root}, "
                     f"tangent_negative = {pc.tangent_negative}, "
                     f"d(u.n)/dtau = {pc.boundary_derivative:.6g}, W u.tau_- = {pc.w_u_dot_tau:.6g}")
    for r in rep.reasons:
        lines.append(f"reason: {r}")
    for w in rep.warnings:
        lines.append(f"warning: {w}")
    decisive = rep.verdict if run.args.strict else rep.boundary_verdict
    if decisive != Verdict.INCONCLUSIVE:
        where = " and ".join(_fmt_pt(p.m) for p in rep.points) or "every point of Gamma-"
        lines.append(f"{decisive.value} hypotheses met at {where}")
        code = EXIT_OK
    else:
        lines.append("hypotheses not met")
        code = EXIT_HYPOTHESES
    lines.append(f"note: {rep.note}")
    return code, "\n".join(lines) + "\n"


def cmd_solve(run: _Run) -> tuple[int, str]:
    p = run.problem()
    if run.args.at is None and run.args.grid is None:
        raise ConfigError("solve needs --at x,y or --grid NX NY")
    if run.args.at is not None:
        x0 = _point_arg(run.args.at)
        r = ch.trace_backward(p, x0, run.tol, run.t_max)
        text = _csv([(_fmt(x0[0]), _fmt(x0[1]), f"{r.value:.6f}", _fmt(r.value), r.status)],
                     ("x", "y", "z", "z_full", "status"))
        return (EXIT_OK if r.ok else EXIT_NUMERIC), text
    nx, ny = run.args.grid
    pts = ch.solve_grid(p, nx, ny, run.tol, run.t_max, run.threads)
    bad = any(g.status not in ("absent", "HitGammaMinus") for g in pts)
    return (EXIT_NUMERIC if bad else EXIT_OK), ch.grid_to_csv(pts)


def _h1_text(rep: reg.RegularityReport) -> str:
    rows = [(k, _fmt(eps), _fmt(I), _fmt(c)) for k, eps, I, c in rep.csv_rows()]
    text = _csv(rows, ("annulus", "eps_k", "I_k", "cumulative"))
    rate = f" rate={rep.rate:.3f}" if rep.rate is not None else ""
    return text + f"# verdict: {rep.verdict.value}{rate} ({rep.rules})\n"


def cmd_h1(run: _Run) -> tuple[int, str]:
    cfg = run.cfg
    if cfg.singular is None or cfg.r0 is None:
        raise ConfigError("h1 needs diagnostics.singular and diagnostics.r0 in the config")
    if run.args.closed_form:
        if cfg.example is None:
            raise ConfigError("--closed-form needs an 'example' key in the config")
        z = oracles.example(cfg.example).z
        nr, nt = 16, 64
    else:
        z = ch.SolutionField(run.problem(), run.tol, run.t_max, run.threads)
        nr, nt = 4, 16
    rep = reg.h1_verdict(run.domain, z, cfg.singular, cfg.r0, cfg.along, cfg.annuli, nr, nt)
    code = EXIT_NUMERIC if rep.verdict == reg.H1Verdict.INCONCLUSIVE else EXIT_OK
    return code, _h1_text(rep)


def cmd_localize(run: _Run) -> tuple[int, str]:
    d, u, W = run.domain, run.u, run.W
    c = classify_boundary(d, u, W)
    E = exceptional_points(c, d, u)
    if not E.points:
        return EXIT_OK, "# no exceptional points: nothing to localize\n"
    dec = loc.decompose_gamma_minus(c, d)
    rows = []
    for i, m in enumerate(E.points):
        j = dec.piece_containing(m.m)
        try:
            f = loc.build_local_frame(m, d, u, W, dec.pieces[j].length, dec.mu0)
        except loc.LocalizationError as e:
            return EXIT_HYPOTHESES, f"# no local frame at {_fmt_pt(m.m)}: {e}\n"
        k = loc.compute_constants(f)
        mu = run.args.mu if run.args.mu is not None else k.r1 / 6.0
        mu = min(mu, 0.5 * dec.mu0)
        split = loc.split_rhs(run.l, dec, mu)
        ring = loc.ring_vanish_check(f, k, loc.local_rhs(f, split, j, mu), mu)
        where = _fmt_pt(m.m)
        for name, value in k.as_rows():
            rows.append((i, where, name, _fmt(value)))
        rows.append((i, where, "mu", _fmt(mu)))
        rows.append((i, where, "ring_max", _fmt(ring.max_abs)))
    return EXIT_OK, _csv(rows, ("point", "m", "quantity", "value"))


def _example_suite(n: int, threads: int) -> list[tuple[str, bool, str]]:
    ex = oracles.example(n)
    d, u, W = ex.domain, ex.u, ex.W
    out = []
    c = classify_boundary(d, u, W)
    ok = all(len(ec.intervals) == len(exp) and all(
        iv.label == lab and abs(iv.s0 - s0) <= 1e-9 and abs(iv.s1 - s1) <= 1e-9
        for iv, (lab, s0, s1) in zip(ec.intervals, exp)) for ec, exp in zip(c.edges, ex.intervals))
    out.append(("classification", ok, f"{len(c.edges)} edges"))
    rep, E = _check_report(d, u, W)
    ok = rep.boundary_verdict == ex.boundary_verdict and (
        not ex.expected_reason or any(ex.expected_reason in r for r in rep.reasons))
    out.append(("hypotheses", ok, rep.boundary_verdict.value))
    p = ch.TransportProblem(d, u, ex.l, W)
    rng = np.random.default_rng(n)
    x0, y0, x1, y1 = d.bbox
    pts = []
    while len(pts) < 20:
        q = (float(rng.uniform(x0, x1)), float(rng.uniform(y0, y1)))
        if not d.contains(q) or any(math.dist(q, s) < 1e-2 for s in ex.singular):
            continue
        if n == 5 and abs(-q[0] * q[1] ** 2 - q[1] - oracles.EX5_SPLIT) < 1e-3:
            continue
        pts.append(q)
    err = max(abs(ch.solve_at(p, q) - ex.z(*q)) for q in pts)
    out.append(("solver_vs_closed_form", err <= 1e-5, f"max error {err:.3e} at 20 points"))
    if ex.h1_locus is not None:
        L = ex.h1_locus
        r = reg.h1_verdict(d, ex.z, L.center, L.r0, L.along)
        expect_div = ex.h1 == "DIVERGENT"
        ok = r.verdict.divergent if expect_div else r.verdict == reg.H1Verdict.CONVERGENT
        out.append(("h1", ok, r.verdict.value))
    else:
        ys = np.linspace(*oracles.EX5_JUMP_RANGE, 22)[1:-1]
        z1, z3 = oracles.example5_side_limits(ys, 1e-24)
        diff = z1 - z3
        err = float(np.max(np.abs(oracles.example5_jump(ys) - diff)))
        ok = err <= 1e-8 and np.all(diff != 0)
        out.append(("h1_jump_probe", ok, f"max deviation {err:.3e}"))
    return out


def cmd_example(run: _Run) -> tuple[int, str]:
    n = run.args.n
    try:
        ex = oracles.example(n)
    except oracles.OracleError as e:
        raise ConfigError(str(e)) from None
    lines = [f"Example {ex.id}: {ex.title}",
             f"u = ({ex.texts.get('u1')}, {ex.texts.get('u2')}), l = {ex.texts.get('l')}, W = {ex.W:g}",
             f"expected: {ex.boundary_verdict.value}, H1 {ex.h1}"]
    results = _example_suite(n, run.threads)
    for name, ok, info in results:
        lines.append(f"{'PASS' if ok else 'FAIL'} {name}: {info}")
    code = EXIT_OK if all(ok for _, ok, _ in results) else EXIT_NUMERIC
    return code, "\n".join(lines) + "\n"


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", required=True, help="problem configuration (YAML)")
    common.add_argument("--tol", type=float, help="trace tolerance (overrides the config)")
    common.add_argument("--tmax", type=float, help="backward time cap (overrides the config)")
    common.add_argument("--threads", type=int, default=1, help="worker processes")
    common.add_argument("--out", help="write the report to this file")

    p = _Parser(prog="transport2d", description="Steady 2D transport: classification, "
                "hypothesis checks, characteristic solver and regularity diagnostics.")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)
    sub.add_parser("classify", parents=[common], help="label the boundary")
    s = sub.add_parser("check", parents=[common], help="check the well-posedness hypotheses")
    s.add_argument("--strict", action="store_true",
                   help="let the full verdict (with the gradient bound) decide the exit code")
    s = sub.add_parser("solve", parents=[common], help="solve at a point or on a grid")
    s.add_argument("--at", help="x,y")
    s.add_argument("--grid", nargs=2, type=int, metavar=("NX", "NY"))
    s = sub.add_parser("h1", parents=[common], help="H1 diagnostic near a boundary locus")
    s.add_argument("--closed-form", action="store_true",
                   help="use the built-in closed form of the linked example instead of the solver")
    s = sub.add_parser("localize", parents=[common], help="local constants and ring check")
    s.add_argument("--mu", type=float, help="cutoff width (default r1/6)")
    s = sub.add_parser("example", help="summary and golden suite of a built-in example")
    s.add_argument("n", type=int)
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--out")
    return p


_COMMANDS = {"classify": cmd_classify, "check": cmd_check, "solve": cmd_solve, "h1": cmd_h1,
             "localize": cmd_localize, "example": cmd_example}


def run(argv: Optional[Sequence[str]] = None) -> int:
    out_path = None
    try:
        args = build_parser().parse_args(argv)
        out_path = args.out
        r = _Run(args)
        code, text = _COMMANDS[args.cmd](r)
        text = _header(args.cmd) + text
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ExprError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ch.OutsideDomain, loc.LocalizationError, reg.QuadratureError, oracles.OracleError,
            PathologicalField, ExprDomainError, ArithmeticError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return code


def main() -> None:
    sys.exit(run())
