"""Command-line front end.

    colehopf derive burgers --m 1 --h "C*exp(alpha*x)" --param C=1 --param alpha=1
    colehopf derive ode --f 1 --w a --v "4*a^2" --s 0 --param a=1
    colehopf synth ode --u "exp(-2*x)+1" --p -2 --q -2
    colehopf solve burgers --config run.ini --field out.csv --report report.json
    colehopf verify classical-burgers
    colehopf families h --kind secant --param B=1 --param omega=1 --param beta=0

Exit codes: 0 pass, 1 constraint or verification failure (including a
degenerate, fully masked field), 2 numerical or I/O failure, 3 parse or
configuration error.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .burgers import H_FAMILIES, derive_coefficients, derive_transform, h_family, m_family_linear_sq
from .errors import ColeHopfError, ParseError, StageError, UnboundParameterError
from .expr import Expr, evaluate, fold, parse, substitute
from .linsolve import Grid1D
from .ode import OdeProblem, forward_derive, reverse_synthesize
from .verify import (
    PDE_TOL,
    ODE_TOL,
    ResidualReport,
    burgers_constraint_report,
    h_family_report,
    implicit_m_report,
    m_family_report,
    ode_constraint_report,
    roundtrip_burgers,
    roundtrip_ode,
)

EXIT_PASS, EXIT_FAIL, EXIT_NUMERIC, EXIT_CONFIG = 0, 1, 2, 3

DEFAULT_GRID = "0:1:101"


class ConfigError(ValueError):
    """Missing or malformed run configuration."""


# ---------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    """Everything a solve or verify run needs, merged from file and flags."""

    kind: str
    coefficients: dict[str, str]
    params: dict[str, float] = field(default_factory=dict)
    grid: Grid1D = Grid1D(0.0, 1.0, 101)
    t_end: float = 0.1
    nt: int = 1000
    theta: float = 0.5
    phi0: str | None = None
    dphi0: str = "0"
    u0: str | None = None
    bc: tuple[str, str] | None = None
    eps_pole: float = 1e-8
    tol: float | None = None
    field_path: str | None = None
    residual_path: str | None = None
    report_path: str | None = None

    REQUIRED = {"burgers": ("m", "h"), "ode": ("f", "w", "v", "s")}

    def echo(self) -> dict:
        out = {
            "kind": self.kind,
            "coefficients": dict(self.coefficients),
            "params": dict(self.params),
            "grid": str(self.grid),
            "eps_pole": self.eps_pole,
            "tol": self.tol,
        }
        if self.kind == "burgers":
            out.update(t_end=self.t_end, nt=self.nt, theta=self.theta, phi0=self.phi0, bc=self.bc)
        else:
            out.update(u0=self.u0, phi0=self.phi0, dphi0=self.dphi0)
        return out


def parse_params(items) -> dict[str, float]:
    """``["a=1", "C=2.5"]`` (or one whitespace/comma separated string)."""
    if isinstance(items, str):
        items = items.replace(",", " ").split()
    out = {}
    for item in items or ():
        name, sep, value = item.partition("=")
        name = name.strip()
        if not sep or not name.isidentifier():
            raise ConfigError(f"bad parameter binding {item!r}: expected name=value")
        try:
            out[name] = float(value)
        except ValueError:
            raise ConfigError(f"bad parameter value in {item!r}") from None
    return out


def _read_ini(path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        text = (path if hasattr(path, "read_text") else Path(path)).read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    unknown = set(cp.sections()) - {"problem", "grid", "time", "solver", "output"}
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")
    return cp


def _pick(flag, cp, section, key, convert=str):
    if flag is not None:
        return flag
    if cp is not None and cp.has_option(section, key):
        raw = cp.get(section, key)
        try:
            return convert(raw)
        except ValueError:
            raise ConfigError(f"bad value for [{section}] {key}: {raw!r}") from None
    return None


def _grid_from(flag, cp) -> Grid1D | None:
    if flag is not None:
        return Grid1D.parse(flag)
    if cp is None or not cp.has_section("grid"):
        return None
    g = cp["grid"]
    try:
        if "spec" in g:
            return Grid1D.parse(g["spec"])
        if {"x0", "x1", "n"} <= set(g):
            return Grid1D(float(g["x0"]), float(g["x1"]), int(g["n"]))
    except ValueError as exc:
        raise ConfigError(f"bad [grid]: {exc}") from None
    raise ConfigError("[grid] needs 'spec = x0:x1:n' or x0, x1 and n")


def build_config(kind: str, args: argparse.Namespace, cp: configparser.ConfigParser | None = None) -> RunConfig:
    """Merge a parsed config file with command-line flags (flags win)."""
    if cp is not None:
        file_kind = cp.get("problem", "kind", fallback=kind)
        if file_kind != kind:
            raise ConfigError(f"config describes a {file_kind!r} problem, not {kind!r}")
    coefficients = {}
    for key in RunConfig.REQUIRED[kind] + (("v1",) if kind == "ode" else ()):
        value = _pick(getattr(args, key, None), cp, "problem", key)
        if value is not None:
            coefficients[key] = value
    missing = [k for k in RunConfig.REQUIRED[kind] if k not in coefficients]
    if missing:
        raise ConfigError(f"missing coefficient(s) for {kind}: {', '.join(missing)}")
    params = parse_params(cp.get("problem", "params", fallback="")) if cp is not None else {}
    params.update(parse_params(getattr(args, "param", None)))

    cfg = RunConfig(kind, coefficients, params)
    grid = _grid_from(getattr(args, "grid", None), cp)
    if grid is not None:
        cfg.grid = grid
    for attr, section, key, conv in (
        ("t_end", "time", "t_end", float),
        ("nt", "time", "nt", int),
        ("theta", "time", "theta", float),
        ("phi0", "problem", "phi0", str),
        ("dphi0", "problem", "dphi0", str),
        ("u0", "problem", "u0", str),
        ("eps_pole", "solver", "eps_pole", float),
        ("tol", "solver", "tol", float),
        ("field_path", "output", "field", str),
        ("residual_path", "output", "residual", str),
        ("report_path", "output", "report", str),
    ):
        value = _pick(getattr(args, attr, None), cp, section, key, conv)
        if value is not None:
            setattr(cfg, attr, value)
    left = _pick(getattr(args, "bc_left", None), cp, "problem", "bc_left")
    right = _pick(getattr(args, "bc_right", None), cp, "problem", "bc_right")
    if (left is None) != (right is None):
        raise ConfigError("give both bc_left and bc_right, or neither")
    if left is not None:
        cfg.bc = (left, right)
    if cfg.nt < 1 or not cfg.t_end > 0:
        raise ConfigError("time spec needs t_end > 0 and nt >= 1")
    if kind == "ode" and cfg.u0 is None:
        raise ConfigError("ode runs need u0, the potential at the left end of the grid")
    if kind == "ode" and cfg.phi0 is None:
        raise ConfigError("ode runs need phi0 (and optionally dphi0) at the left end of the grid")
    return cfg


def _constant(text: str, x0: float, params) -> float:
    return float(evaluate(parse(text), x0, params))


# ---------------------------------------------------------------------------
# output


def fmt(v: float) -> str:
    return format(float(v), ".16e")


def write_csv(path, header: list[str], columns: list[np.ndarray]) -> None:
    """Deterministic CSV: 17 significant digits, LF line endings."""
    lines = [",".join(header)]
    for row in zip(*columns):
        lines.append(",".join(str(int(v)) if isinstance(v, (bool, np.bool_)) else fmt(v) for v in row))
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_field_csv(path, report: ResidualReport) -> None:
    fld, psi = report.artifacts["field"], report.artifacts["psi"]
    x = fld.grid.x
    if fld.times is None:
        write_csv(path, ["x", "phi", "dphi", "psi", "mask"], [x, fld.phi, fld.dphi, psi.psi, psi.mask])
        return
    nt, n = fld.phi.shape
    write_csv(
        path,
        ["x", "t", "phi", "dphi", "psi", "mask"],
        [np.tile(x, nt), np.repeat(fld.times, n), fld.phi.ravel(), fld.dphi.ravel(), psi.psi.ravel(), psi.mask.ravel()],
    )


def write_residual_csv(path, report: ResidualReport, grid: Grid1D) -> None:
    r = report.residual
    if report.times is None:
        write_csv(path, ["x", "residual"], [grid.x, r])
    else:
        nt, n = r.shape
        write_csv(path, ["x", "t", "residual"], [np.tile(grid.x, nt), np.repeat(report.times, n), r.ravel()])


def emit_report(doc: dict, path: str | None) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if path in (None, ""):
        return
    if path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _text(e: Expr, params) -> str:
    return str(fold(substitute(e, params)))


def _verdict_line(label: str, report: ResidualReport) -> str:
    kind = "relative " if report.relative else ""
    return f"{label}: {report.verdict} ({kind}max residual {report.linf:.3e}, tolerance {report.tolerance:.1e})"


# ---------------------------------------------------------------------------
# commands


def cmd_derive(args) -> int:
    params = parse_params(args.param)
    grid = Grid1D.parse(args.grid)
    x = grid.x
    doc = {"command": f"derive {args.kind}", "params": params, "grid": str(grid)}
    if args.kind == "burgers":
        M, H = parse(args.m), parse(args.h)
        pair = derive_transform(M, H, params, x)
        W, V = derive_coefficients(M, H, params, x)
        report = burgers_constraint_report(M, H, x, params)
        derived = {"Q": pair.Q, "P": pair.P, "W": W, "V": V}
    else:
        problem = OdeProblem.from_text(
            parse(args.f), parse(args.w), parse(args.v), parse(args.s), env=params, domain=(grid.x0, grid.x1)
        )
        d = forward_derive(problem, x)
        report = ode_constraint_report(problem, x)
        derived = {"Q": d.pair.Q, "P": d.pair.P, "g": d.u_ode.g, "h": d.u_ode.h}
    texts = {k: _text(v, params) for k, v in derived.items()}
    for k, v in texts.items():
        print(f"{k} = {v}")
    if args.kind == "ode":
        print(f"U-equation: U' + ({texts['g']})*U = {texts['h']}")
    print(_verdict_line("constraint", report))
    doc.update(derived=texts, constraint=report.to_dict())
    emit_report(doc, args.report)
    return EXIT_PASS if report.passed else EXIT_FAIL


def cmd_synth(args) -> int:
    params = parse_params(args.param)
    grid = Grid1D.parse(args.grid)
    problem = reverse_synthesize(parse(args.u), parse(args.p), parse(args.q), params, (grid.x0, grid.x1), grid.x)
    texts = {k: _text(v, params) for k, v in problem.coefficients().items()}
    for k, v in texts.items():
        print(f"{k} = {v}")
    report = ode_constraint_report(problem, grid.x)
    print(_verdict_line("constraint", report))
    emit_report({"command": "synth ode", "params": params, "derived": texts, "constraint": report.to_dict()}, args.report)
    return EXIT_PASS if report.passed else EXIT_FAIL


def run_config(cfg: RunConfig) -> ResidualReport:
    c, env = cfg.coefficients, cfg.params
    if cfg.kind == "burgers":
        return roundtrip_burgers(
            c["m"], c["h"], None if cfg.phi0 is None else parse(cfg.phi0), cfg.grid, cfg.t_end, cfg.nt, env,
            theta=cfg.theta, tol=PDE_TOL if cfg.tol is None else cfg.tol,
            bc=None if cfg.bc is None else tuple(parse(b) for b in cfg.bc), eps_pole=cfg.eps_pole,
        )
    if "v1" in c:
        raise ConfigError("solving with a psi' term is not supported; remove v1 or reduce it first")
    x0 = cfg.grid.x0
    return roundtrip_ode(
        c["f"], c["w"], c["v"], c["s"],
        _constant(cfg.u0, x0, env), _constant(cfg.phi0, x0, env), _constant(cfg.dphi0, x0, env),
        cfg.grid, env, tol=ODE_TOL if cfg.tol is None else cfg.tol, eps_pole=cfg.eps_pole,
    )


def _run_document(cfg: RunConfig, report: ResidualReport) -> dict:
    doc = {"config": cfg.echo(), "report": report.to_dict()}
    problem = report.artifacts.get("problem")
    if problem is not None:
        doc["derived"] = {
            k: _text(getattr(problem, k), cfg.params)
            for k in (("W", "V") if cfg.kind == "burgers" else ())
        }
        pair = report.artifacts.get("pair") or report.artifacts["derived"].pair
        doc["derived"].update(P=_text(pair.P, cfg.params), Q=_text(pair.Q, cfg.params))
    return doc


def _summarise(label: str, report: ResidualReport) -> None:
    flags = " [degenerate field]" if report.degenerate else ""
    print(f"{label}: {report.equation} {report.verdict}{flags}  L_inf={report.linf:.3e}  L2={report.l2:.3e}  "
          f"masked={report.masked_fraction:.3f}  tol={report.tolerance:.1e}")


def cmd_solve(args) -> int:
    cp = _read_ini(args.config) if args.config else None
    cfg = build_config(args.kind, args, cp)
    report = run_config(cfg)
    _summarise(f"solve {cfg.kind}", report)
    if report.stage == "residual":
        if cfg.field_path:
            write_field_csv(cfg.field_path, report)
        if cfg.residual_path:
            write_residual_csv(cfg.residual_path, report, cfg.grid)
    emit_report(_run_document(cfg, report), cfg.report_path)
    return EXIT_PASS if report.passed else EXIT_FAIL


BUNDLED_CASES = ("classical-burgers", "exponential-convection", "bessel-potential")


def _case_path(name: str):
    path = Path(name)
    if path.suffix == ".ini" or path.exists():
        return path
    case = resources.files("colehopf").joinpath("cases", f"{name}.ini")
    if not case.is_file():
        raise ConfigError(f"unknown case {name!r}; bundled cases: {', '.join(BUNDLED_CASES)}")
    return case


def cmd_verify(args) -> int:
    docs, ok = [], True
    for name in args.case:
        cp = _read_ini(_case_path(name))
        if not cp.has_option("problem", "kind"):
            raise ConfigError(f"case {name!r} lacks [problem] kind")
        kind = cp.get("problem", "kind")
        if kind not in RunConfig.REQUIRED:
            raise ConfigError(f"case {name!r}: unknown kind {kind!r}")
        cfg = build_config(kind, argparse.Namespace(), cp)
        report = run_config(cfg)
        _summarise(name, report)
        ok &= report.passed
        doc = _run_document(cfg, report)
        doc["case"] = name
        docs.append(doc)
    print(f"verify: {'pass' if ok else 'fail'}")
    emit_report({"command": "verify", "verdict": "pass" if ok else "fail", "cases": docs}, args.report)
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_families(args) -> int:
    params = parse_params(args.param)
    grid = Grid1D.parse(args.grid)
    x = grid.x
    reports = []
    if args.family == "h":
        if args.kind not in H_FAMILIES:
            raise ConfigError(f"H family kind must be one of: {', '.join(H_FAMILIES)}")
        H = h_family(args.kind, params)
        print(f"H = {H}")
        reports.append(("H equation", h_family_report(H, x)))
        reports.append(("compatibility with M = const", burgers_constraint_report(parse(args.m), H, x, params)))
        expr = {"H": str(H)}
    elif args.kind == "linear-sq":
        M = m_family_linear_sq(params.get("a1", 1.0), params.get("b1", 1.0))
        print(f"M = {M}")
        reports.append(("M equation", m_family_report(M, x)))
        reports.append(("compatibility with H = 1", burgers_constraint_report(M, parse("1"), x)))
        expr = {"M": str(M)}
    elif args.kind == "implicit":
        if "c" not in params:
            raise ConfigError("implicit M family needs --param c=...")
        r = implicit_m_report(params["c"], params.get("C1", 0.0), params.get("C2", 0.0), grid, int(params.get("branch", 1)))
        reports.append(("w w'' = c", r))
        expr = {"M": "w(x)^2 (implicit)"}
    else:
        raise ConfigError("M family kind must be 'linear-sq' or 'implicit'")
    for label, r in reports:
        print(_verdict_line(label, r))
    ok = all(r.passed for _, r in reports)
    emit_report(
        {"command": f"families {args.family}", "kind": args.kind, "params": params, "expressions": expr,
         "checks": [dict(r.to_dict(), label=label) for label, r in reports]},
        args.report,
    )
    return EXIT_PASS if ok else EXIT_FAIL


# ---------------------------------------------------------------------------
# argument parsing


def _common(p: argparse.ArgumentParser, grid_default: str | None = DEFAULT_GRID) -> None:
    p.add_argument("--param", action="append", default=[], metavar="NAME=VALUE", help="bind a parameter (repeatable)")
    p.add_argument("--grid", default=grid_default, metavar="X0:X1:N", help="uniform grid")
    p.add_argument("--report", metavar="PATH", help="write a JSON report ('-' for stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="colehopf", description="Generalized Cole-Hopf linearisation toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    derive = sub.add_parser("derive", help="derive the transform pair and compatibility verdict")
    dsub = derive.add_subparsers(dest="kind", required=True)
    p = dsub.add_parser("burgers", help="psi_t - M psi_xx = H psi psi_x + V psi + W psi^2")
    p.add_argument("--m", required=True, help="diffusivity M(x)")
    p.add_argument("--h", required=True, help="convection coefficient H(x)")
    _common(p)
    p = dsub.add_parser("ode", help="psi'' = S + (V + F psi') psi + W psi^2")
    for name in "fwvs":
        p.add_argument(f"--{name}", required=True, help=f"coefficient {name.upper()}(x)")
    _common(p)

    synth = sub.add_parser("synth", help="synthesise an equation from a transform")
    ssub = synth.add_subparsers(dest="kind", required=True)
    p = ssub.add_parser("ode", help="coefficients from (U, P, Q)")
    p.add_argument("--u", required=True, help="potential U(x) of phi'' = U phi")
    p.add_argument("--p", required=True, help="P(x)")
    p.add_argument("--q", required=True, help="Q(x), nonvanishing")
    _common(p)

    solve = sub.add_parser("solve", help="solve the linear partner, transform and check the residual")
    vsub = solve.add_subparsers(dest="kind", required=True)
    for kind in ("burgers", "ode"):
        p = vsub.add_parser(kind)
        p.add_argument("--config", metavar="INI", help="run configuration (flags override)")
        if kind == "burgers":
            p.add_argument("--m")
            p.add_argument("--h")
            p.add_argument("--t-end", dest="t_end", type=float)
            p.add_argument("--nt", type=int)
            p.add_argument("--theta", type=float)
            p.add_argument("--bc-left", dest="bc_left", help="left Dirichlet value, may use t")
            p.add_argument("--bc-right", dest="bc_right", help="right Dirichlet value, may use t")
            p.add_argument("--phi0", help="initial profile phi(x, 0)")
        else:
            for name in ("f", "w", "v", "s", "v1"):
                p.add_argument(f"--{name}")
            p.add_argument("--u0", help="U at the left end of the grid")
            p.add_argument("--phi0", help="phi at the left end of the grid")
            p.add_argument("--dphi0", help="phi' at the left end of the grid")
        p.add_argument("--eps-pole", dest="eps_pole", type=float)
        p.add_argument("--tol", type=float)
        p.add_argument("--field", dest="field_path", metavar="CSV")
        p.add_argument("--residual", dest="residual_path", metavar="CSV")
        p.add_argument("--param", action="append", default=[], metavar="NAME=VALUE")
        p.add_argument("--grid", metavar="X0:X1:N")
        p.add_argument("--report", dest="report_path", metavar="PATH")

    p = sub.add_parser("verify", help="run bundled or user case files")
    p.add_argument("case", nargs="+", help=f"case file or bundled name ({', '.join(BUNDLED_CASES)})")
    p.add_argument("--report", metavar="PATH")

    fam = sub.add_parser("families", help="check the known coefficient families")
    fsub = fam.add_subparsers(dest="family", required=True)
    p = fsub.add_parser("h", help="H families for constant M")
    p.add_argument("--kind", required=True, choices=sorted(H_FAMILIES))
    p.add_argument("--m", default="1", help="the constant diffusivity")
    _common(p)
    p = fsub.add_parser("m", help="M families for H = 1")
    p.add_argument("--kind", required=True, choices=("linear-sq", "implicit"))
    _common(p)
    return parser


COMMANDS = {"derive": cmd_derive, "synth": cmd_synth, "solve": cmd_solve, "verify": cmd_verify, "families": cmd_families}


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        return _exit_code(exc.cause)
    if isinstance(exc, (ParseError, UnboundParameterError, ConfigError)):
        return EXIT_CONFIG
    if isinstance(exc, ColeHopfError):
        return EXIT_NUMERIC
    # remaining ValueErrors come from malformed user input (grid specs, theta, ...)
    return EXIT_CONFIG if isinstance(exc, ValueError) else EXIT_NUMERIC


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PASS if exc.code == 0 else EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except (ColeHopfError, OSError, ValueError, ArithmeticError, RuntimeError) as exc:
        print(f"colehopf: error: {exc}", file=sys.stderr)
        return _exit_code(exc)
    except Exception as exc:  # never crash with a traceback
        print(f"colehopf: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
