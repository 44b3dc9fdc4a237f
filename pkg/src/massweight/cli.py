"""Command-line front end (``massweight`` / ``python -m massweight``).

Exit codes: 0 success, 2 bad input or parameters, 3 inconsistent masses in
the input, 4 failed verification.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys

import numpy as np

from . import __version__
from .count_table import MassTable, read_csv, write_csv
from .errors import InputFormatError, MassMismatch, MassweightError
from .estimator import cov_matrix_blue, cov_matrix_new, matrix_record, report
from .oracle import ExplicitDomain, exact_moments, replicate_mc
from .synthetic import PRESETS, SyntheticConfig, TailSource, expected_sampled_mass, regime_config
from .zsolver import INITS, METHODS, BoundaryCase, solve_z

EXIT_OK, EXIT_INPUT, EXIT_CONSISTENCY, EXIT_VERIFY = 0, 2, 3, 4
ORACLE_TOL = 1e-12


class UsageError(Exception):
    pass


def fmt(x) -> str:
    return format(x, ".17g")


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON with every float written to 17 significant digits.

    NaN becomes ``null`` and infinities become the strings ``"inf"``/``"-inf"``.
    """
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [pad + dumps(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)) or obj is None:
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "null"
        if math.isinf(x):
            return '"inf"' if x > 0 else '"-inf"'
        return fmt(x)
    return json.dumps(str(obj) if not isinstance(obj, str) else obj)


def manifest(args, **extra) -> dict:
    m = {"command": args.command, "tool": "massweight", "version": __version__}
    for name in ("input", "method", "init", "seed", "replicates", "size", "draws", "trials",
                 "known_z", "csv", "json", "out"):
        if hasattr(args, name) and getattr(args, name) is not None:
            m[name] = getattr(args, name)
    m.update(extra)
    return m


def _write(text: str, path: str | None, stdout):
    if path is None or path == "-":
        stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _manifest_line(m: dict) -> str:
    return "# manifest: " + json.dumps(m, sort_keys=True) + "\n"


# estimate / solve

def cmd_estimate(args, stdout) -> int:
    table = read_csv(args.input)
    if args.known_z is not None:
        rep = report(table, known_z=args.known_z)
    else:
        rep = report(table, solve_z(table, method=args.method))
    out = {"manifest": manifest(args)}
    out.update(rep.to_dict())
    _write(dumps(out) + "\n", args.out, stdout)
    return EXIT_OK


def cmd_solve(args, stdout) -> int:
    table = read_csv(args.input)
    sol = solve_z(table, method=args.method, init=args.init)
    buf = io.StringIO()
    buf.write(_manifest_line(manifest(args)))
    buf.write(f"# case: {sol.case.value}\n")
    if sol.case is BoundaryCase.REGULAR:
        counts = {init: solve_z(table, method=args.method, init=init).iterations for init in INITS}
        buf.write("# iterations: " + ", ".join(f"{k}={v}" for k, v in counts.items()) + "\n")
        buf.write(f"# z: {fmt(sol.z)}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["k", "z", "phi", "residual"])
        for k, z, ph, res in sol.trace:
            writer.writerow([k, fmt(z), fmt(ph), fmt(res)])
    else:
        z = "undetermined" if sol.z is None else ("inf" if math.isinf(sol.z) else fmt(sol.z))
        buf.write(f"# iterations: 0\n# z: {z}\n")
    _write(buf.getvalue(), args.out, stdout)
    return EXIT_OK


# synthetic commands

def _config(args) -> SyntheticConfig:
    if args.config:
        with open(args.config) as fh:
            raw = json.load(fh)
        base = raw.get("regime")
        if base and not {"a", "b", "n_draws"} <= set(raw):
            preset = regime_config(base, m=raw.get("m", 4), seed=raw.get("seed", 0))
            raw = {**preset.__dict__, **raw}
        cfg = SyntheticConfig.from_dict(raw)
    elif args.regime:
        cfg = regime_config(args.regime, m=args.m if args.m is not None else 4, seed=args.seed)
    else:
        if args.a is None or args.b is None or args.n is None:
            raise UsageError("give --regime, --config or all of --a --b --n")
        cfg = SyntheticConfig(a=args.a, b=args.b, n_draws=args.n,
                              m=args.m if args.m is not None else 4, seed=args.seed)
    if args.config and args.seed_given:
        cfg = SyntheticConfig(**{**cfg.__dict__, "seed": args.seed})
    if cfg.expected_sampled_mass is None:
        esm = expected_sampled_mass(cfg.distribution, cfg.n_draws)
        cfg = SyntheticConfig(**{**cfg.__dict__, "expected_sampled_mass": esm})
    return cfg


def _config_dict(cfg: SyntheticConfig) -> dict:
    return {"a": cfg.a, "b": cfg.b, "n_draws": cfg.n_draws, "m": cfg.m,
            "seed": cfg.seed, "regime": cfg.regime}


def cmd_compare(args, stdout) -> int:
    cfg = _config(args)
    res = replicate_mc(TailSource(cfg.distribution, cfg.m), cfg.n_draws, args.replicates,
                       cfg.seed, threads=args.threads, method=args.method)
    man = manifest(args, config=_config_dict(cfg), seed=cfg.seed)

    buf = io.StringIO()
    buf.write(_manifest_line(man))
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["replicate", "fbar_new", "fbar_blue", "fbar_known_z", "z", "case"])
    for i, new, blue, known, z, case in res.rows():
        writer.writerow([i, fmt(new), fmt(blue), fmt(known), fmt(z), case])
    if args.csv:
        _write(buf.getvalue(), args.csv, stdout)

    cases = {c.value: res.cases.count(c.value) for c in BoundaryCase if c.value in res.cases}
    summary = {
        "manifest": man,
        "expected_sampled_mass": cfg.expected_sampled_mass,
        "new": res.summary["new"],
        "blue": res.summary["blue"],
        "known_z": res.summary.get("known_z"),
        "variance_ratio": res.summary["variance_ratio"],
        "cases": cases,
    }
    _write(dumps(summary) + "\n", args.json, stdout)
    return EXIT_OK


def cmd_generate(args, stdout) -> int:
    cfg = _config(args)
    source = TailSource(cfg.distribution, cfg.m)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed)))
    table = source.draw(rng, cfg.n_draws)
    man = manifest(args, config=_config_dict(cfg), seed=cfg.seed)
    text = _manifest_line(man) + write_csv(table, aggregated=args.aggregated)
    _write(text, args.out, stdout)
    return EXIT_OK


# oracle

def _oracle_check(masses, n):
    """Worst absolute gap between enumeration and the closed forms."""
    dom = ExplicitDomain(masses)
    z = dom.z
    worst = (0.0, None)
    for kind, formula in (("blue", cov_matrix_blue), ("new_known_z", cov_matrix_new)):
        mom = exact_moments(dom, n, kind)
        mean_gap = np.abs(mom.mean - dom.masses / z)
        cov_gap = np.abs(mom.covariance - formula(dom.masses, z, n))
        for label, gap in (("mean", mean_gap), ("cov", cov_gap)):
            idx = np.unravel_index(np.argmax(gap), gap.shape)
            if gap[idx] > worst[0]:
                worst = (float(gap[idx]), f"{kind} {label}{list(map(int, idx))}")
    return worst


def cmd_oracle(args, stdout) -> int:
    if not 1 <= args.size <= 6:
        raise UsageError("--size must be between 1 and 6")
    if args.draws < 1 or args.trials < 1:
        raise UsageError("--draws and --trials must be positive")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(args.seed)))
    worst, worst_where, worst_masses = 0.0, None, None
    for _ in range(args.trials):
        masses = np.exp(rng.uniform(math.log(1e-3), 0.0, size=args.size))
        gap, where = _oracle_check(masses, args.draws)
        if gap > worst or worst_masses is None:
            worst, worst_where, worst_masses = gap, where, masses
    ok = worst <= ORACLE_TOL
    out = {
        "manifest": manifest(args),
        "status": "pass" if ok else "fail",
        "tolerance": ORACLE_TOL,
        "worst_gap": worst,
        "worst_entry": worst_where,
        "worst_domain": [float(m) for m in worst_masses],
    }
    dom = ExplicitDomain(worst_masses)
    legend = list(range(dom.size))
    for kind, formula in (("blue", cov_matrix_blue), ("new_known_z", cov_matrix_new)):
        out[f"covariance_{kind}"] = {
            "enumerated": matrix_record(exact_moments(dom, args.draws, kind).covariance, legend),
            "closed_form": matrix_record(formula(dom.masses, dom.z, args.draws), legend),
        }
    # informational: how far solving z per sample moves the moments (no threshold)
    known = exact_moments(dom, args.draws, "new_known_z")
    solved = exact_moments(dom, args.draws, "new_solved_z")
    out["solved_z_effect"] = {
        "max_mean_shift": float(np.max(np.abs(solved.mean - known.mean))),
        "max_covariance_shift": float(np.max(np.abs(solved.covariance - known.covariance))),
    }
    stdout.write(dumps(out) + "\n")
    return EXIT_OK if ok else EXIT_VERIFY


# parser

def _synthetic_args(p):
    p.add_argument("--regime", choices=sorted(PRESETS))
    p.add_argument("--a", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--n", type=int, help="draws per sample")
    p.add_argument("--m", type=int, help="oscillation count of the test function (default 4)")
    p.add_argument("--config", help="JSON file with a, b, n_draws, m, seed, regime")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="massweight", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"massweight {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="estimate an average from a sample file")
    p.add_argument("input")
    p.add_argument("--method", choices=METHODS, default="newton")
    p.add_argument("--known-z", type=float, dest="known_z")
    p.add_argument("--out")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("solve", help="print the iteration trace for the normalization constant")
    p.add_argument("input")
    p.add_argument("--method", choices=METHODS, default="newton")
    p.add_argument("--init", choices=INITS, default="good-turing")
    p.add_argument("--out")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("compare", help="replicate both estimators on a synthetic problem")
    _synthetic_args(p)
    p.add_argument("--replicates", type=int, default=1000)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--method", choices=METHODS, default="newton")
    p.add_argument("--csv", help="per-replicate CSV output")
    p.add_argument("--json", help="summary JSON output (default stdout)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("oracle", help="check closed-form moments against exact enumeration")
    p.add_argument("--size", type=int, default=4)
    p.add_argument("--draws", type=int, default=6)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("generate", help="dump a synthetic sample as CSV")
    _synthetic_args(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--aggregated", action="store_true", help="write key,count,mass,fvalue rows")
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate)
    return parser


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if hasattr(args, "seed") and args.command in ("compare", "generate"):
        args.seed_given = args.seed is not None
        if args.seed is None:
            args.seed = 0
    try:
        if getattr(args, "replicates", 2) < 2:
            raise UsageError("--replicates must be at least 2")
        return args.func(args, stdout)
    except MassMismatch as exc:
        stderr.write(f"massweight: inconsistent input: {exc}\n")
        return EXIT_CONSISTENCY
    except (InputFormatError, UsageError, FileNotFoundError, ValueError, MassweightError) as exc:
        stderr.write(f"massweight: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
