"""Command-line front end: ``manegeo {geodesic,hyperbolic,verify} --spec FILE``."""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import jsonio
from .action import DiscretePath, path_to_csv
from .config import Configuration
from .errors import CollisionObstructionError, InputDomainError, QuadratureError
from .hyperbolic import run_hyperbolic
from .potentials import PotentialSpec
from .solver import SolveOptions, solve_geodesic
from .verify import run_suite

log = logging.getLogger("manegeo")

EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED, EXIT_COLLISION, EXIT_CHECKS = 0, 1, 2, 3, 4


class SpecError(InputDomainError):
    pass


def _config(data, field: str, masses=None) -> Configuration:
    try:
        if isinstance(data, dict):
            cfg = Configuration.from_dict(data)
        else:
            cfg = Configuration(np.asarray(data, dtype=float), masses)
    except (InputDomainError, TypeError, ValueError) as exc:
        raise SpecError(f"field '{field}': {exc}") from None
    if not np.all(np.isfinite(cfg.bodies)):
        raise SpecError(f"field '{field}': non-finite coordinates")
    return cfg


def _require(spec: dict, field: str):
    if field not in spec:
        raise SpecError(f"missing field '{field}'")
    return spec[field]


def parse_lambda(spec: dict) -> float:
    try:
        lam = float(_require(spec, "lambda"))
    except (TypeError, ValueError):
        raise SpecError("field 'lambda': not a number") from None
    if not (math.isfinite(lam) and lam > 0):
        raise SpecError("field 'lambda': must be positive")
    return lam


def parse_potential(spec: dict, masses) -> PotentialSpec:
    try:
        return PotentialSpec.from_dict(_require(spec, "potential"), masses)
    except SpecError:
        raise
    except (InputDomainError, TypeError, ValueError, KeyError) as exc:
        raise SpecError(f"field 'potential': {exc}") from None


def parse_options(spec: dict) -> SolveOptions:
    try:
        return SolveOptions.from_dict(spec.get("solver"))
    except InputDomainError as exc:
        raise SpecError(f"field 'solver': {exc}") from None


def load_spec(path: str) -> dict:
    try:
        spec = jsonio.loads(Path(path).read_text())
    except OSError as exc:
        raise SpecError(f"cannot read spec: {exc}") from None
    except ValueError as exc:
        raise SpecError(f"spec is not valid JSON: {exc}") from None
    if not isinstance(spec, dict):
        raise SpecError("spec must be a JSON object")
    return spec


def _write(out: Path, name: str, text: str):
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text)


def cmd_geodesic(spec: dict, args) -> int:
    lam = parse_lambda(spec)
    x = _config(_require(spec, "x"), "x")
    y = _config(_require(spec, "y"), "y", x.masses)
    if not np.array_equal(x.masses, y.masses) or x.bodies.shape != y.bodies.shape:
        raise SpecError("field 'y': shape or masses differ from 'x'")
    F = parse_potential(spec, x.masses)
    opts = parse_options(spec)
    initial = None
    if "initial_path" in spec:
        try:
            nodes = np.asarray(spec["initial_path"], dtype=float)
            initial = DiscretePath(nodes, x.masses)
        except (InputDomainError, TypeError, ValueError) as exc:
            raise SpecError(f"field 'initial_path': {exc}") from None
    if x == y:
        raise SpecError("fields 'x' and 'y': endpoints coincide")
    try:
        result = solve_geodesic(x, y, F, lam, opts, initial)
    except CollisionObstructionError as exc:
        log.error("collision obstruction: %s", exc)
        return EXIT_COLLISION
    out = Path(args.out)
    _write(out, "geodesic.json", jsonio.dumps(result.to_dict()))
    _write(out, "path.csv", path_to_csv(result.path))
    if not result.converged:
        log.warning("optimizer did not converge")
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_hyperbolic(spec: dict, args) -> int:
    lam = parse_lambda(spec)
    x = _config(_require(spec, "x"), "x")
    a = _config(_require(spec, "a"), "a", x.masses)
    F = parse_potential(spec, x.masses)
    opts = parse_options(spec) if "solver" in spec else None
    mode = args.mode or spec.get("mode", "strict")
    rng = _require(spec, "n_range")
    try:
        n_from, n_to = (int(v) for v in rng)
    except (TypeError, ValueError):
        raise SpecError("field 'n_range': expected [n_from, n_to]") from None
    try:
        report = run_hyperbolic(x, a, lam, F, n_from, n_to, opts, mode, args.workers)
    except QuadratureError as exc:
        raise SpecError(f"field 'potential': {exc}") from None
    out = Path(args.out)
    _write(out, "report.json", jsonio.dumps(report.to_dict()))
    rows = ["t,radius,angle_error,defect,bound"]
    rows += [",".join(f"{v:.17g}" for v in row) for row in report.defect_curve]
    _write(out, "defect.csv", "\n".join(rows) + "\n")
    for n, err in sorted(report.failures.items()):
        log.warning("run n=%d failed: %s", n, err)
    failed = [c for c in report.asserted_checks() if not c.passed]
    if report.failures and report.strict:
        return EXIT_NOT_CONVERGED
    if failed:
        log.warning("%d asserted bound checks failed", len(failed))
        return EXIT_CHECKS
    return EXIT_OK


def cmd_verify(spec: dict, args) -> int:
    lam = parse_lambda(spec)
    if "masses" in spec:
        masses = spec["masses"]
    elif "x" in spec:
        masses = _config(spec["x"], "x").masses
    else:
        masses = [1.0, 1.0]
    F = parse_potential(spec, masses)
    d = int(spec.get("d", 2))
    samples = int(spec.get("samples", 3))
    opts = parse_options(spec) if "solver" in spec else None
    seed = args.seed if args.seed is not None else int(spec.get("seed", 0))
    records = run_suite(F, lam, d, seed, samples, opts)
    ok = all(r["pass"] for r in records)
    _write(Path(args.out), "verify.json", jsonio.dumps({"pass": ok, "checks": records}))
    for r in records:
        if not r["pass"]:
            log.warning("check failed: %s", r["check"])
    return EXIT_OK if ok else EXIT_CHECKS


COMMANDS = {"geodesic": cmd_geodesic, "hyperbolic": cmd_hyperbolic, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="manegeo", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--spec", required=True, help="problem spec JSON file")
        p.add_argument("--mode", choices=("strict", "exploratory"), default=None)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    if args.workers < 1:
        log.error("--workers must be at least 1")
        return EXIT_INPUT
    try:
        spec = load_spec(args.spec)
        return COMMANDS[args.command](spec, args)
    except InputDomainError as exc:
        log.error("%s", exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
