"""Command-line front end.

Usage::

    driftfem <command> [--config FILE] [options]

Commands: ``solve``, ``mms``, ``verify``, ``stability``, ``resolvent``,
``constants``.

Configuration files are INI-style with a single ``[driftfem]`` section;
keys are listed in :data:`CONFIG_KEYS`.  Field values use the expression
grammar of :func:`driftfem.fields.from_expression` (vectors and matrices
as ``;``-separated components, matrices row-major).  Flags override the
file; ``DRIFTFEM_OUTPUT_DIR`` overrides the configured output directory
(an explicit ``--out`` still wins).

Exit codes: 0 when every check passes, 2 when a check fails or a solve
breaks down, 1 for usage or configuration errors.

Report files (``report.csv``) start with a ``# generated <timestamp>``
line followed by a header row ``case_id,check,paper_ref,measured,bound,
slack,verdict``.  Numbers are written with 17 significant digits, so two
runs with the same configuration differ only in the first line.

``solve`` additionally writes:

* ``mesh.txt``: ``# rect x0 y0 x1 y1``, ``# vertices V``, then V lines
  ``id x y boundary`` (boundary is 0 or 1), then ``# triangles T`` and T
  lines ``id v0 v1 v2`` (counter-clockwise vertex ids).
* ``K.coo`` / ``b.coo``: ``# shape R C`` followed by ``row col value``
  lines, zero-based, over interior unknowns only.
* ``solution.csv``: ``vertex,x,y,u`` for every vertex (boundary rows are 0).
* ``norms.txt``: ``name = value`` lines for the norms of ``u_h``.
"""

import argparse
import configparser
import datetime
import math
import os
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import harness
from .assembly import assemble_primal, write_coo
from .estimates import compute_constants
from .fields import AssumptionError, CoefficientSet, from_expression
from .linsolve import NonConvergenceError, SingularSystemError
from .mesh import Rect, build_structured_mesh, write_mesh
from .resolvent import DiscreteResolvent, check_lr_contraction, check_submarkov, strong_continuity_sweep

__all__ = ["RunConfig", "CONFIG_KEYS", "ConfigError", "run", "main"]

COMMANDS = ("solve", "mms", "verify", "stability", "resolvent", "constants")
OUTPUT_ENV = "DRIFTFEM_OUTPUT_DIR"
SECTION = "driftfem"


class ConfigError(ValueError):
    pass


class _UsageError(Exception):
    pass


def _fmt(v):
    return f"{v:.17g}"


def _float_list(text):
    return tuple(float(t) for t in str(text).replace(",", " ").split())


def _int_list(text):
    return tuple(int(t) for t in str(text).replace(",", " ").split())


def _canon_float(v):
    return "inf" if v == math.inf else repr(float(v))


def _canon_floats(vs):
    return ", ".join(_canon_float(v) for v in vs)


def _canon_ints(vs):
    return ", ".join(str(int(v)) for v in vs)


def _parse_bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# name -> (parser, canonical writer)
_TYPES = {
    "str": (lambda s: str(s).strip(), str),
    "float": (float, _canon_float),
    "int": (int, str),
    "floats": (_float_list, _canon_floats),
    "ints": (_int_list, _canon_ints),
    "bool": (_parse_bool, lambda b: "true" if b else "false"),
}


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs; echoes back to a canonical text form."""

    command: str = "verify"
    domain: tuple = (0.0, 0.0, 1.0, 1.0)
    levels: tuple = (64,)
    A: str = "1; 0; 0; 1"
    B: str = "0; 0"
    c: str = "0"
    f: str = "0"
    F: str = "0; 0"
    psi: str = "1 + x*y"
    alpha: float = 1.0
    lam: float = 1.0
    a_max: float = 1.0
    rs: tuple = (1.0, 2.0, math.inf)
    q: float = 2.0
    two_star: float = 1.5
    d: int = 2
    volume: float = 0.0  # 0: use the domain area
    case: str = "diffusion"
    suite: bool = False
    seed: int = 0
    n_cases: int = 20
    slack: float = 0.02
    stability_slack: float = 0.05
    tol: float = 1e-9
    threshold: float = 1e-3
    delta: float = 0.25
    n_max: int = 16
    alphas: tuple = (0.5, 1.0, 2.0, 10.0)
    out: str = "driftfem-out"
    jobs: int = 1

    def to_text(self):
        lines = [f"[{SECTION}]"]
        for f_ in fields(self):
            kind = CONFIG_KEYS[f_.name]
            lines.append(f"{f_.name} = {_TYPES[kind][1](getattr(self, f_.name))}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text, base=None):
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str  # keys are case-sensitive (A vs a)
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from None
        if cp.sections() != [SECTION]:
            raise ConfigError(f"config must contain exactly one [{SECTION}] section, found {cp.sections()}")
        return (base or cls()).updated(dict(cp[SECTION]))

    def updated(self, mapping):
        changes = {}
        for key, raw in mapping.items():
            if key not in CONFIG_KEYS:
                raise ConfigError(f"unknown config key {key!r}")
            if not isinstance(raw, str):
                changes[key] = raw  # already typed (command-line flags)
                continue
            try:
                changes[key] = _TYPES[CONFIG_KEYS[key]][0](raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key!r}: {exc}") from None
        cfg = replace(self, **changes)
        cfg.check()
        return cfg

    def check(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if len(self.domain) != 4 or self.domain[2] <= self.domain[0] or self.domain[3] <= self.domain[1]:
            raise ConfigError("domain must be 'x0, y0, x1, y1' with x1 > x0 and y1 > y0")
        if not self.levels or any(n < 1 for n in self.levels):
            raise ConfigError("levels must be positive mesh sizes")
        if not all(r >= 1 for r in self.rs):
            raise ConfigError("every r must be >= 1")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")

    @property
    def rect(self):
        return Rect(*self.domain)

    def coefficients(self):
        """Build the coefficient set; malformed expressions raise ValueError."""
        A = from_expression(self.A)
        B = from_expression(self.B)
        return CoefficientSet(
            A=A, B=B, c=from_expression(self.c), alpha=self.alpha, f=from_expression(self.f),
            F=from_expression(self.F), lam=self.lam, a_max=self.a_max, two_star=self.two_star,
            q=self.q, d=self.d,
            description={"A": self.A, "B": self.B, "c": self.c, "f": self.f, "F": self.F},
        )


CONFIG_KEYS = {
    "command": "str", "domain": "floats", "levels": "ints", "A": "str", "B": "str", "c": "str",
    "f": "str", "F": "str", "psi": "str", "alpha": "float", "lam": "float", "a_max": "float",
    "rs": "floats", "q": "float", "two_star": "float", "d": "int", "volume": "float", "case": "str",
    "suite": "bool", "seed": "int", "n_cases": "int", "slack": "float", "stability_slack": "float",
    "tol": "float", "threshold": "float", "delta": "float", "n_max": "int", "alphas": "floats",
    "out": "str", "jobs": "int",
}


# ----------------------------------------------------------------------------
# argument handling
# ----------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser():
    p = _Parser(prog="driftfem", description="Galerkin verification of drift-diffusion estimates.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="INI file with a single [driftfem] section")
    p.add_argument("--levels", help="comma-separated mesh sizes, e.g. 16,32,64")
    p.add_argument("--d", type=int)
    p.add_argument("--q", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--volume", type=float)
    p.add_argument("--two-star", dest="two_star", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--suite", action="store_true", default=None, help="run the seeded random coefficient suite")
    p.add_argument("--case", help="manufactured case for mms: diffusion, drift or zero")
    p.add_argument("--out", help="output directory")
    p.add_argument("--jobs", type=int)
    p.add_argument("--echo-config", action="store_true", help="print the canonical config and exit")
    return p


def _resolve_config(args):
    cfg = RunConfig()
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        cfg = RunConfig.from_text(text)
    overrides = {"command": args.command}
    for key in ("levels", "d", "q", "lam", "volume", "two_star", "alpha", "seed", "suite", "case", "jobs"):
        v = getattr(args, key)
        if v is not None:
            overrides[key] = v
    env_out = os.environ.get(OUTPUT_ENV)
    if env_out:
        overrides["out"] = env_out
    if args.out is not None:
        overrides["out"] = args.out
    return cfg.updated(overrides)


# ----------------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------------


def _stamp():
    return "generated " + datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


def _outdir(cfg):
    p = Path(cfg.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _mesh(cfg):
    if cfg.d != 2:
        raise ConfigError(f"meshes are two-dimensional; d={cfg.d} is only valid for 'constants'")
    n = cfg.levels[-1]
    return build_structured_mesh(n, n, cfg.rect)


def _write_report(cfg, rep, out):
    (out / "report.csv").write_text(rep.to_csv(_stamp()))
    (out / "summary.txt").write_text(rep.summary())
    print(rep.summary(), end="")
    return 0 if rep.passed else 2


def _cmd_constants(cfg, out):
    vol = cfg.volume if cfg.volume > 0 else cfg.rect.area
    if not cfg.q > cfg.d / 2:
        raise AssumptionError("exponent q", f"need q > d/2, got q={cfg.q!r} with d={cfg.d}")
    if cfg.d == 2 and not 1 < cfg.two_star < 2:
        raise AssumptionError("lower exponent", f"two_star must lie in (1, 2) when d = 2, got {cfg.two_star!r}")
    k = compute_constants(cfg.lam, cfg.d, cfg.q, cfg.two_star, vol)
    lines = [f"{name} = {_fmt(v)}" for name, v in k.as_dict().items()]
    text = "\n".join(lines) + "\n"
    (out / "constants.txt").write_text(text)
    print(text, end="")
    return 0


def _cmd_solve(cfg, out):
    mesh = _mesh(cfg)
    cs = cfg.coefficients()
    sys_ = assemble_primal(cs, mesh)
    sol = harness.solve_primal(cs, mesh)
    write_mesh(mesh, out / "mesh.txt")
    write_coo(sys_.K, out / "K.coo")
    write_coo(sys_.b, out / "b.coo")
    with open(out / "solution.csv", "w") as fh:
        fh.write("vertex,x,y,u\n")
        for k, ((x, y), u) in enumerate(zip(mesh.vertices, sol.full)):
            fh.write(f"{k},{_fmt(x)},{_fmt(y)},{_fmt(u)}\n")
    norms = {"L1": sol.L1, "L2": sol.L2, "Linf": sol.Linf, "grad_L2": sol.grad_L2, "H1": sol.H1,
             "residual": sol.residual}
    text = "".join(f"{k} = {_fmt(v)}\n" for k, v in norms.items())
    (out / "norms.txt").write_text(text)
    print(text, end="")
    return 0


def _cmd_mms(cfg, out):
    res = harness.mms_convergence_study(cfg.case, cfg.levels, cfg.rect)
    (out / "mms.csv").write_text(res.to_csv())
    print(res.to_csv(), end="")
    print("orders on last pair:", " ".join(_fmt(o) for o in res.last_orders))
    return 0 if res.passed else 2


def _cmd_verify(cfg, out):
    mesh = _mesh(cfg)
    psi = from_expression(cfg.psi)
    if cfg.suite:
        cases = harness.random_suite(cfg.seed, cfg.n_cases)
        rep = harness.run_suite(cases, mesh, cfg.rs, cfg.slack, cfg.jobs, psi=psi)
        rep.meta["seed"] = cfg.seed
        with open(out / "cases.txt", "w") as fh:
            for cid, cs in cases:
                fh.write(f"[{cid}]\n")
                for k, v in cs.description.items():
                    fh.write(f"{k} = {v}\n")
    else:
        cs = cfg.coefficients()
        rep = harness.verify_solution_bounds(cs, mesh, cfg.rs, cfg.slack, "config")
        rep.add("config", "duality", harness.REFS["duality"], harness.duality_check(cs, mesh, psi), cfg.tol, 0.0,
                kind="identity")
        if cs.alpha > 0:
            rep.extend(harness.extended_l1_check(cs, mesh, cs.f, cs.F, cfg.slack, "config"))
        rep.meta["coefficients"] = cs.description
    rep.meta["mesh"] = f"{cfg.levels[-1]}x{cfg.levels[-1]}"
    return _write_report(cfg, rep, out)


def _cmd_stability(cfg, out):
    mesh = _mesh(cfg)
    cs = cfg.coefficients()
    if cfg.alpha <= 0:
        raise ConfigError("stability needs alpha > 0")
    sched = harness.mollified_drift_schedule(cs, mesh, cfg.delta)
    rows, rep = harness.stability_sweep(cs, mesh, sched, range(1, cfg.n_max + 1), cfg.stability_slack,
                                        cfg.threshold, jobs=cfg.jobs)
    with open(out / "stability.csv", "w") as fh:
        fh.write("n,diff_L1,bound,dB2,dc,dA_grad_u,df1,dF2\n")
        for r in rows:
            fh.write(",".join([str(r.n)] + [_fmt(v) for v in (r.diff_L1, r.bound, r.dB2, r.dc, r.dA_grad_u,
                                                               r.df1, r.dF2)]) + "\n")
    rep.meta["delta"] = cfg.delta
    return _write_report(cfg, rep, out)


def _cmd_resolvent(cfg, out):
    mesh = _mesh(cfg)
    cs = cfg.coefficients()
    R = DiscreteResolvent.from_coefficients(cs, mesh)
    rng = np.random.default_rng(cfg.seed)
    rep = harness.EstimateReport(meta={"seed": cfg.seed, "submarkov_tol": R.submarkov_tol})
    alphas = cfg.alphas
    for k in range(cfg.n_cases):
        f = rng.standard_normal(R.n)
        nf = np.linalg.norm(f)
        worst = 0.0
        for a in alphas:
            Ga = R.apply(a, f)
            for b in alphas:
                gap = Ga - R.apply(b, f) - (b - a) * R.apply(b, Ga)
                worst = max(worst, np.linalg.norm(gap) / nf)
        rep.add(f"f{k:02d}", "resolvent_identity", harness.REFS["resolvent_identity"], worst, cfg.tol, 0.0,
                kind="identity")
    for a in alphas:
        g = rng.uniform(0.0, 1.0, R.n)
        chk = check_submarkov(R, a, g)
        # identity-style record: distance outside [0, 1]
        excess = max(0.0, -chk.detail["min"], chk.detail["max"] - 1.0)
        rep.add(f"alpha={_canon_float(a)}", "submarkov", harness.REFS["submarkov"], excess, chk.tol, 0.0,
                kind="identity")
        for r in cfg.rs:
            c = check_lr_contraction(R, a, g, r)
            rep.add(f"alpha={_canon_float(a)}", f"contraction_L{harness._rname(r)}", harness.REFS["contraction"],
                    c.measured, c.bound, cfg.slack)
    sweep = strong_continuity_sweep(R, cs.f, sorted(alphas))
    with open(out / "continuity.csv", "w") as fh:
        fh.write("alpha,L1_distance\n")
        for a, v in zip(sorted(alphas), sweep):
            fh.write(f"{_canon_float(a)},{_fmt(v)}\n")
    return _write_report(cfg, rep, out)


_COMMANDS = {
    "constants": _cmd_constants,
    "solve": _cmd_solve,
    "mms": _cmd_mms,
    "verify": _cmd_verify,
    "stability": _cmd_stability,
    "resolvent": _cmd_resolvent,
}


def run(argv=None):
    """Run one command; returns the exit code."""
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _build_parser().parse_args(argv)
        if args.levels is not None:
            try:
                args.levels = _int_list(args.levels)
            except ValueError:
                raise _UsageError(f"--levels expects comma-separated integers, got {args.levels!r}") from None
        cfg = _resolve_config(args)
        if args.echo_config:
            print(cfg.to_text(), end="")
            return 0
        out = _outdir(cfg)
        (out / "config.ini").write_text(cfg.to_text())
        return _COMMANDS[cfg.command](cfg, out)
    except _UsageError as exc:
        print(f"driftfem: usage error: {exc}", file=sys.stderr)
        return 1
    except AssumptionError as exc:
        print(f"driftfem: assumption violated {exc}", file=sys.stderr)
        return 1
    except (ConfigError, ValueError) as exc:
        print(f"driftfem: config error: {exc}", file=sys.stderr)
        return 1
    except (SingularSystemError, NonConvergenceError) as exc:
        print(f"driftfem: solve failed: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run())
