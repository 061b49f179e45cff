"""Command-line front end: ``mudnf <command> --scenario FILE --out DIR``.

Exit status: 0 success, 1 unparseable or invalid scenario, 2 verification
failure, 3 precondition failure, 4 numerical failure. Every flag has an
environment override with the ``MUDNF_`` prefix (``MUDNF_SCENARIO``,
``MUDNF_OUT``, ``MUDNF_SEED``, ``MUDNF_TOL_PROFILE``, ``MUDNF_FIXED_CLOCK``).
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from . import admissibility as adm
from .dichotomy import Spectrum, compute_spectrum
from .errors import (BudgetError, DomainError, InconclusiveError, InvariantError, MudnfError,
                     NumericalError, PreconditionError, VerificationError, WindowError)
from .homological import QuadControls
from .linear import fit_bounded_growth
from .nonlinearity import check_consistency, verify_H2
from .nonuniform import fit_nonuniform_context, pair_epsilon, shrinkage_report
from .resonance import check_H3
from .scenario import ConfigError, Scenario, load_scenario
from .transform import SAMPLE_TIMES, eliminate_term, fitted_table, normal_form

log = logging.getLogger("mudnf")

COMMANDS = ("spectrum", "resonance", "eliminate", "normal-form", "verify", "nonuniform-report")
FIXED_TIMESTAMP = "1970-01-01T00:00:00+00:00"

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY, EXIT_PRECONDITION, EXIT_NUMERICAL = 0, 1, 2, 3, 4


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, VerificationError):
        return EXIT_VERIFY
    if isinstance(exc, (PreconditionError, DomainError, BudgetError, WindowError)):
        return EXIT_PRECONDITION
    if isinstance(exc, (NumericalError, InconclusiveError, InvariantError)):
        return EXIT_NUMERICAL
    return EXIT_NUMERICAL


# ---- output helpers -------------------------------------------------------------------

def jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _strip_timing(obj):
    if isinstance(obj, dict):
        return {k: _strip_timing(v) for k, v in obj.items() if k != "seconds"}
    if isinstance(obj, list):
        return [_strip_timing(v) for v in obj]
    return obj


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                        for v in r])


# ---- pipeline pieces ------------------------------------------------------------------

def _controls(sc: Scenario) -> QuadControls:
    return QuadControls(rtol=float(sc.tolerances["rtol"]), tail_tol=float(sc.tolerances["tail_tol"]))


def scenario_spectrum(sc: Scenario, op=None, *, mode: str | None = None):
    spec = sc.spectrum
    if "intervals" in spec:
        return Spectrum(tuple(tuple(float(v) for v in iv) for iv in spec["intervals"]),
                        tol=float(spec.get("tol", 0.0)), mode=spec.get("mode", "uniform"),
                        per_block=True)
    op = op if op is not None else sc.operator()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return compute_spectrum(op, sc.rate, tuple(spec.get("window", (-5.0, 5.0))),
                                float(spec.get("tol", sc.tolerances["spectrum_tol"])),
                                mode=mode or spec.get("mode", "uniform"),
                                n_nodes=int(spec.get("n_nodes", sc.tolerances["n_nodes"])),
                                **({"horizon": float(spec["horizon"])} if "horizon" in spec else {}))


def run_spectrum(sc: Scenario, out: Path, seed: int) -> tuple[dict, int]:
    op = sc.operator()
    spectrum = scenario_spectrum(sc, op)
    result = {"spectrum": spectrum.as_dict()}
    try:
        g = fit_bounded_growth(op, sc.rate)
        result["bounded_growth"] = {"K": g.K, "a": g.a, "epsilon": g.epsilon, "admits": g.admits}
    except MudnfError as exc:
        result["bounded_growth"] = {"error": str(exc)}
    rows = sorted(((p.gamma, int(p.admits), p.rank, p.slack) for p in spectrum.probes))
    write_csv(out / "spectrum_probes.csv", ["gamma", "admits", "rank", "slack"], rows)
    return result, EXIT_OK


def run_resonance(sc: Scenario, out: Path, seed: int) -> tuple[dict, int]:
    spectrum = scenario_spectrum(sc)
    rep = check_H3(spectrum, sc.ell, inflate=float(getattr(spectrum, "tol", 0.0)))
    result = {"spectrum": spectrum.as_dict(), "H3": rep.as_dict(),
              "verdicts": [v.as_dict() for v in rep.verdicts]}
    return result, EXIT_OK if rep.passed else EXIT_VERIFY


def compare_elimination(nl, G, j: int, k: tuple, times=SAMPLE_TIMES) -> dict:
    """Before/after coefficient table for orders 1..|k| with the targeted entry expected to vanish."""
    order = sum(k)
    fitted = fitted_table(G.eval, G.dims, range(1, order + 1), times, domain_radius=G.domain_radius)
    rows, target_after, other_shift = [], 0.0, 0.0
    for t, jj, kk, after, err in fitted:
        if sum(kk) >= 2:
            before = float(np.max(np.abs(nl.taylor_coeff(jj, kk, t))))
        else:
            before = 0.0
        if (jj, tuple(kk)) == (j, tuple(k)):
            target_after = max(target_after, after)
        else:
            other_shift = max(other_shift, abs(after - before))
        rows.append((t, jj, "-".join(map(str, kk)), before, after, err))
    return {"rows": rows, "target_after": target_after, "other_shift": other_shift}


def run_eliminate(sc: Scenario, out: Path, seed: int) -> tuple[dict, int]:
    op = sc.operator()
    spectrum = scenario_spectrum(sc, op)
    j, k = sc.target()
    mode = sc.options.get("mode", "admissible")
    G = eliminate_term(op, sc.nonlinearity, spectrum, j, k, rate=sc.rate, mode=mode,
                       controls=_controls(sc))
    cmp = compare_elimination(sc.nonlinearity, G, j, k)
    tol = float(sc.options.get("coeff_tol", 1e-5))
    cm = G.ts.map
    grid = np.linspace(-5.0, 5.0, 21)
    write_csv(out / "trumpet.csv", ["t", "zeta", "xi"],
              [(float(t), cm.zeta(t), cm.trumpet_radius(t)) for t in grid])
    write_csv(out / "coefficients.csv", ["t", "j", "k", "before", "after", "error"], cmp["rows"])
    passed = cmp["target_after"] <= tol and cmp["other_shift"] <= tol
    result = {"spectrum": spectrum.as_dict(), "map": cm.describe(),
              "verification": {"target_after": cmp["target_after"], "other_shift": cmp["other_shift"],
                               "tol": tol, "passed": passed}}
    if mode == "uniform":
        result["map"]["rho"] = cm.tubular_radius()
    return result, EXIT_OK if passed else EXIT_VERIFY


def run_normal_form(sc: Scenario, out: Path, seed: int) -> tuple[dict, int]:
    op = sc.operator()
    spectrum = scenario_spectrum(sc, op)
    res = normal_form(op, sc.nonlinearity, spectrum, sc.ell, rate=sc.rate,
                      threshold=float(sc.options.get("threshold", 1e-4)), controls=_controls(sc))
    write_csv(out / "coefficients.csv", ["t", "j", "k", "coefficient", "error"],
              [(t, j, "-".join(map(str, k)), v, e) for t, j, k, v, e in res.table])
    result = {"spectrum": spectrum.as_dict(), "normal_form": res.as_dict()}
    return result, EXIT_OK if res.passed else EXIT_VERIFY


def run_verify(sc: Scenario, out: Path, seed: int) -> tuple[dict, int]:
    op = sc.operator()
    nl = sc.nonlinearity
    mode = sc.options.get("mode", "admissible")
    delta = float(sc.options.get("delta", 0.5))
    checks = {}
    h2 = verify_H2(nl, sc.rate, mode, deltas=(delta,), seed=seed, strict=False)
    checks["H2"] = h2.as_dict()
    cons = check_consistency(nl, seed=seed)
    checks["consistency"] = {"passed": cons.passed, "failures": [list(map(str, f)) for f in cons.failures],
                             "max_coeff_error": cons.max_coeff_error}
    g = fit_bounded_growth(op, sc.rate)
    checks["bounded_growth"] = {"passed": bool(g.admits), "K": g.K, "a": g.a, "epsilon": g.epsilon}
    spectrum = scenario_spectrum(sc, op)
    rep = check_H3(spectrum, sc.ell, inflate=float(getattr(spectrum, "tol", 0.0)))
    checks["H3"] = rep.as_dict()
    grid = sc.rate.inverse_log(np.linspace(-10.0, 10.0, 41))
    try:
        prof = adm.zeta_profile(nl.psi, sc.rate, delta, grid)
        write_csv(out / "zeta.csv", ["t", "zeta_plus", "zeta_minus", "weighted"],
                  zip(prof.grid, prof.plus, prof.minus, prof.weighted))
    except NumericalError as exc:
        checks["zeta_profile"] = {"error": str(exc)}
    passed = h2.passed and cons.passed and g.admits and rep.passed
    return {"checks": checks, "passed": passed}, EXIT_OK if passed else EXIT_VERIFY


def run_nonuniform(sc: Scenario, out: Path, seed: int) -> tuple[dict, int]:
    op = sc.operator()
    spectrum = scenario_spectrum(sc, op, mode=sc.spectrum.get("mode", "nonuniform"))
    j, k = sc.target()
    eps = float(sc.options.get("epsilon", pair_epsilon(spectrum, j, k)))
    ctx = fit_nonuniform_context(op, spectrum, eps, rate=sc.rate,
                                 mode=sc.options.get("context_mode", "nonuniform"))
    grid = [float(t) for t in sc.options.get("grid", np.linspace(-10.0, 10.0, 21))]
    rep = shrinkage_report(ctx, sc.rate, sc.nonlinearity.psi, spectrum, j, k, grid)
    write_csv(out / "nonuniform.csv", ["t", "eta_plus", "eta_minus", "xi_uniform", "xi_nonuniform", "ratio"],
              rep.rows)
    return {"spectrum": spectrum.as_dict(), "context": ctx.as_dict(),
            "min_ratio": rep.min_ratio}, EXIT_OK


RUNNERS = {
    "spectrum": run_spectrum,
    "resonance": run_resonance,
    "eliminate": run_eliminate,
    "normal-form": run_normal_form,
    "verify": run_verify,
    "nonuniform-report": run_nonuniform,
}


# ---- entry point ----------------------------------------------------------------------

def _env(name: str, default=None):
    return os.environ.get("MUDNF_" + name, default)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mudnf", description="Normal forms for nonautonomous ODEs "
                                "with mu-dichotomies: scenario-driven pipeline.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--scenario", default=_env("SCENARIO"), help="scenario YAML file")
    p.add_argument("--out", default=_env("OUT", "mudnf-out"), help="output directory")
    p.add_argument("--seed", type=int, default=int(_env("SEED", "0")))
    p.add_argument("--tol-profile", choices=("fast", "accurate"), default=_env("TOL_PROFILE", "fast"))
    p.add_argument("--fixed-clock", action="store_true",
                   default=_env("FIXED_CLOCK", "0").lower() in ("1", "true", "yes"),
                   help="write a fixed timestamp and omit timings for byte-identical reports")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--version", action="version", version=f"mudnf {__version__}")
    return p


def run(command: str, scenario: str, out: str, *, seed: int = 0, tol_profile: str = "fast",
        fixed_clock: bool = False) -> int:
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    report = {"command": command, "seed": seed, "tol_profile": tol_profile, "version": __version__,
              "generated": FIXED_TIMESTAMP if fixed_clock else _dt.datetime.now(_dt.timezone.utc).isoformat()}
    try:
        sc = load_scenario(scenario, tol_profile=tol_profile)
    except ConfigError as exc:
        print(f"mudnf: {scenario}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    report["scenario"] = sc.raw
    report["name"] = sc.name
    np.random.seed(seed)
    try:
        result, code = RUNNERS[command](sc, outdir, seed)
        report["result"] = result
    except MudnfError as exc:
        code = exit_code_for(exc)
        report["error"] = {"type": type(exc).__name__, "message": str(exc)}
        transcript = getattr(exc, "transcript", None)
        if transcript is not None:
            report["error"]["transcript"] = transcript
        print(f"mudnf: {command} failed ({type(exc).__name__}): {exc}", file=sys.stderr)
    report["exit_code"] = code
    data = jsonable(report)
    if fixed_clock:
        data = _strip_timing(data)
    (outdir / "report.json").write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not args.scenario:
        print("mudnf: --scenario is required (or set MUDNF_SCENARIO)", file=sys.stderr)
        return EXIT_CONFIG
    if not Path(args.scenario).exists():
        print(f"mudnf: scenario file {args.scenario!r} not found", file=sys.stderr)
        return EXIT_CONFIG
    return run(args.command, args.scenario, args.out, seed=args.seed, tol_profile=args.tol_profile,
               fixed_clock=args.fixed_clock)


if __name__ == "__main__":
    sys.exit(main())
