"""
Batch front-end.

    cfrg [SUBCOMMAND] --config run.json --out DIR [--threads N] [--verbose]

The subcommand may also be given in the config under ``"subcommand"``.
Exit codes: 0 success, 2 validation error, 3 solver non-convergence,
4 expected/observed mismatch, 5 I/O error.
"""

import argparse
import hashlib
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import experiments, liouville
from .errors import ConvergenceError, PositivityError, PreconditionError, UnsupportedError
from .fieldio import dump_field, write_csv_slice
from .geometry import ConformalBackground, Lattice, band_limited_psi, make_tt_field
from .lichnerowicz import (
    Status,
    make_data,
    obstruction_check,
    solve_monotone,
    solve_newton,
)
from .reconstruct import build_initial_data, hamiltonian_residual, metadata, momentum_residual, trace_K
from .yamabe import yamabe_sign

SCHEMA = "cfrg.run/1"
SUBCOMMANDS = ("solve", "sweep", "table", "degenerate", "liouville", "reconstruct", "yamabe", "converge")

EXIT_OK, EXIT_VALIDATION, EXIT_NONCONVERGENCE, EXIT_MISMATCH, EXIT_IO = 0, 2, 3, 4, 5

log = logging.getLogger("cfrg")


class ValidationError(ValueError):
    pass


@dataclass
class RunConfig:
    subcommand: str
    n: int = 16
    L: float = 1.0
    background: dict = field(default_factory=lambda: {"mode": "flat", "R": 0.0})
    sigma: dict = None
    tau: float = 0.0
    solver: dict = field(default_factory=dict)
    experiment: dict = field(default_factory=dict)
    seed: int = 0
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def method(self):
        return self.solver.get("method", "newton")

    @property
    def tol(self):
        return self.solver.get("tol")

    @property
    def max_iter(self):
        return self.solver.get("max_iter")

    def sha256(self):
        return hashlib.sha256(json.dumps(self.raw, sort_keys=True).encode()).hexdigest()


def _require(cond, message):
    if not cond:
        raise ValidationError(message)


def _finite(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def parse_config(raw, subcommand=None):
    """Validate a config dictionary and return a :class:`RunConfig`."""
    _require(isinstance(raw, dict), "config must be a JSON object")
    _require(raw.get("schema") == SCHEMA, f"config 'schema' must be {SCHEMA!r}")
    sub = subcommand or raw.get("subcommand")
    _require(sub in SUBCOMMANDS, f"subcommand must be one of {', '.join(SUBCOMMANDS)}")
    lat = raw.get("lattice", {})
    n, L = lat.get("n", 16), lat.get("L", 1.0)
    _require(isinstance(n, int) and n >= 8, "lattice.n must be an integer >= 8")
    _require(_finite(L) and L > 0, "lattice.L must be positive")
    bg = raw.get("background", {"mode": "flat", "R": 0.0})
    _require(bg.get("mode") in ("flat", "conformally_flat"), "background.mode must be 'flat' or 'conformally_flat'")
    if bg["mode"] == "flat":
        _require(_finite(bg.get("R", 0.0)), "background.R must be a finite number")
    else:
        _require(isinstance(bg.get("psi"), list) and bg["psi"], "background.psi must be a list of cosine terms")
        for term in bg["psi"]:
            _require(_finite(term.get("amplitude")), "psi term needs a finite amplitude")
            _require(len(term.get("m", [])) == 3, "psi term needs three mode numbers 'm'")
    tau = raw.get("tau", 0.0)
    _require(_finite(tau), "tau must be a finite number")
    sigma = raw.get("sigma")
    if sigma is not None:
        _require(isinstance(sigma, dict), "sigma must be an object or null")
        for mode in sigma.get("modes", []):
            _require(len(mode.get("m", [])) == 3, "sigma mode needs three mode numbers 'm'")
            _require("eps" in mode, "sigma mode needs an amplitude 'eps'")
    solver = raw.get("solver", {})
    _require(solver.get("method", "newton") in ("newton", "monotone"), "solver.method must be newton or monotone")
    if "tol" in solver:
        _require(_finite(solver["tol"]) and solver["tol"] > 0, "solver.tol must be positive")
    if "max_iter" in solver:
        _require(isinstance(solver["max_iter"], int) and solver["max_iter"] > 0, "solver.max_iter must be a positive integer")
    seed = raw.get("seed", 0)
    _require(isinstance(seed, int), "seed must be an integer")
    exp = raw.get("experiment", {})
    _require(isinstance(exp, dict), "experiment must be an object")
    return RunConfig(sub, n, float(L), bg, sigma, float(tau), solver, exp, seed, raw)


# -- building objects from the config -------------------------------------------

def _psi_terms(spec):
    return [(t["amplitude"], t["m"], t.get("phase", 0.0)) for t in spec]


def build_background(cfg):
    lattice = Lattice(cfg.n, cfg.L)
    if cfg.background["mode"] == "flat":
        return ConformalBackground.flat(lattice, cfg.background.get("R", 0.0))
    psi = band_limited_psi(lattice, _psi_terms(cfg.background["psi"]))
    return ConformalBackground.conformally_flat(lattice, psi)


def build_sigma(cfg, lattice):
    """Flat TT tensor from the sigma spec (``None`` when absent)."""
    if cfg.sigma is None:
        return None
    const = cfg.sigma.get("const", [0.0] * 6)
    modes = [(2 * np.pi * np.asarray(m["m"], dtype=float) / lattice.L, np.asarray(m["eps"], dtype=float),
              m.get("phase", 0.0)) for m in cfg.sigma.get("modes", [])]
    return make_tt_field(lattice, const, modes) * cfg.sigma.get("scale", 1.0)


def build_data(cfg):
    bg = build_background(cfg)
    sigma = build_sigma(cfg, bg.lattice)
    if sigma is not None and not bg.is_flat:
        sigma = sigma / bg.psi**2  # TT for psi^4 delta when TT for delta
    return make_data(bg, sigma=sigma, tau=cfg.tau)


def case_spec(cfg):
    _require(cfg.background["mode"] == "flat", "converge needs a flat background (use experiment.psi for transfer)")
    const, modes = None, ()
    if cfg.sigma is not None:
        scale = cfg.sigma.get("scale", 1.0)
        const = tuple(np.asarray(cfg.sigma.get("const", [0.0] * 6), dtype=float).ravel() * scale)
        if len(const) == 9:
            c = np.asarray(const).reshape(3, 3)
            const = (c[0, 0], c[1, 1], c[2, 2], c[0, 1], c[0, 2], c[1, 2])
        modes = tuple((tuple(m["m"]), np.asarray(m["eps"], dtype=float) * scale, m.get("phase", 0.0))
                      for m in cfg.sigma.get("modes", []))
    psi = cfg.experiment.get("psi")
    return experiments.CaseSpec(R=cfg.background.get("R", 0.0), sigma_const=const, sigma_modes=modes,
                                tau=cfg.tau, psi_terms=None if psi is None else tuple(_psi_terms(psi)), L=cfg.L)


def _solve(cfg, data):
    kw = {"tol": cfg.tol}
    if cfg.max_iter:
        kw["max_iter"] = cfg.max_iter
    if cfg.method == "monotone":
        return solve_monotone(data, **kw)
    return solve_newton(data, restarts=cfg.solver.get("restarts", 0), seed=cfg.seed, **kw)


# -- output -------------------------------------------------------------------------

class RunWriter:
    """All files of a run go through here; ``close`` writes the manifest."""

    def __init__(self, out):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files = []

    def path(self, name):
        self.files.append(name)
        return self.out / name

    def json(self, name, obj):
        with open(self.path(name), "w") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)
            fh.write("\n")

    def close(self):
        manifest = {}
        for name in sorted(set(self.files)):
            if not (self.out / name).exists():
                continue
            manifest[name] = hashlib.sha256((self.out / name).read_bytes()).hexdigest()
        with open(self.out / "manifest.json", "w") as fh:
            json.dump({"schema": SCHEMA, "files": manifest}, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if hasattr(obj, "value"):
        return obj.value
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _header(cfg):
    return {"schema": SCHEMA, "subcommand": cfg.subcommand, "config_sha256": cfg.sha256()}


# -- subcommands ---------------------------------------------------------------------

def run_solve(cfg, w, threads):
    data = build_data(cfg)
    if data.bg.is_flat:
        verdict = obstruction_check(data)
        if verdict.status is Status.OBSTRUCTED:
            raise ValidationError(f"data class {data.class_tag.label()} is obstructed: {verdict.reason}")
    rep = _solve(cfg, data)
    dump_field(w.path("phi.cfrg"), rep.phi, data.lattice)
    write_csv_slice(w.path("phi_slice.csv"), rep.phi, 0)
    w.json("report.json", {**_header(cfg), "data": data.describe(), "solve": rep.to_json("phi.cfrg")})
    return EXIT_OK, (f"solve: {rep.method.value} converged in {rep.iterations} its, residual "
                     f"{rep.residual_max:.2e}, phi in [{rep.phi.min():.6g}, {rep.phi.max():.6g}]")


def run_yamabe(cfg, w, threads):
    bg = build_background(cfg)
    rep = yamabe_sign(bg, tol=cfg.experiment.get("zero_tol", 1e-6))
    w.json("report.json", {**_header(cfg), "yamabe": rep.to_json()})
    dump_field(w.path("minimizer.cfrg"), rep.minimizer, bg.lattice)
    return EXIT_OK, f"yamabe: sign {rep.sign}, lambda1 = {rep.lambda1:.6e}"


def run_liouville(cfg, w, threads):
    exp = cfg.experiment
    k = exp.get("k", (cfg.tau**2 / 12.0) if cfg.tau else 1.0 / 12.0)
    _require(_finite(k) and k > 0, "experiment.k must be positive")
    thresholds = tuple(exp.get("thresholds", (1 + 1e-3, 1.5, 2.0)))
    _require(all(_finite(t) and t > 1 for t in thresholds), "thresholds must exceed 1")
    rep = liouville.nonexistence_report(k, thresholds, step=exp.get("step"))
    rep.trajectory.to_csv(w.path("trajectory.csv"))
    w.json("report.json", {**_header(cfg), "liouville": rep.to_json("trajectory.csv")})
    return EXIT_OK, f"liouville: k = {k:.6g}, exceedance radii {', '.join(f'{r:.6g}' for r in rep.radii)}"


def run_table(cfg, w, threads):
    exp = cfg.experiment
    rep = experiments.table_scan(n=cfg.n, R_values=tuple(exp.get("R_values", (1.0, 0.0, -1.0))),
                                 tau=exp.get("tau", 1.0), tol=cfg.tol, threads=threads, L=cfg.L)
    w.json("report.json", {**_header(cfg), "table": rep.to_json()})
    code = EXIT_OK if rep.all_match else EXIT_MISMATCH
    return code, f"table: {rep.matches}/{len(rep.cells)} cells match"


def run_sweep(cfg, w, threads):
    exp = cfg.experiment
    bg = build_background(cfg)
    C1, C2 = exp.get("C1", 4.0), exp.get("C2", 4.0)
    _require(C1 is None or (_finite(C1) and C1 >= 1), "experiment.C1 must be >= 1")
    _require(C2 is None or (_finite(C2) and C2 >= 1), "experiment.C2 must be >= 1")
    samples = exp.get("samples", 5)
    _require(isinstance(samples, int) and samples >= 1, "experiment.samples must be a positive integer")
    base = build_sigma(cfg, bg.lattice) if cfg.sigma is not None else None
    if base is not None and not bg.is_flat:
        base = base / bg.psi**2
    rep = experiments.bounds_sweep(C1 if base is not None else 1.0, C2, base, bg, samples,
                                   tol=cfg.tol, threads=threads)
    rep.to_csv(w.path("sweep.csv"))
    w.json("report.json", {**_header(cfg), "sweep": rep.to_json()})
    if not rep.all_converged:
        return EXIT_NONCONVERGENCE, f"sweep: {len(rep.failures)} samples failed to converge"
    if rep.violations:
        return EXIT_MISMATCH, f"sweep: {rep.violations} barrier violations"
    return EXIT_OK, (f"sweep: {len(rep.samples)} samples, phi in [{rep.global_min:.6g}, {rep.global_max:.6g}] "
                     f"within barriers [{rep.barriers[0]:.6g}, {rep.barriers[1]:.6g}]")


def run_degenerate(cfg, w, threads):
    data = build_data(cfg)
    rep = _solve(cfg, data)
    c_values = cfg.experiment.get("c_values", [0.125, 1.0, 8.0])
    _require(all(_finite(c) and c > 0 for c in c_values), "c_values must be positive")
    rows = experiments.degeneration_study(data, rep.phi, c_values, tol=rep.tol)
    w.json("report.json", {**_header(cfg), "base_solve": rep.to_json(), "rows": rows})
    bad = [r for r in rows if not r["ok"]]
    if bad:
        return EXIT_NONCONVERGENCE, f"degenerate: {len(bad)} of {len(rows)} re-solves failed"
    return EXIT_OK, f"degenerate: {len(rows)} scales reproduce c*phi0"


def run_reconstruct(cfg, w, threads):
    data = build_data(cfg)
    rep = _solve(cfg, data)
    ids = build_initial_data(rep.phi, data)
    H = hamiltonian_residual(ids)
    M = momentum_residual(ids)
    dump_field(w.path("gamma.cfrg"), ids.gamma, data.lattice)
    dump_field(w.path("K.cfrg"), ids.K, data.lattice)
    meta = metadata(ids, cfg.sha256())
    meta.update(files={"gamma": "gamma.cfrg", "K": "K.cfrg"})
    w.json("initial_data.json", meta)
    cert = {
        "hamiltonian_max": float(np.abs(H).max()),
        "momentum_max": float(np.abs(M).max()),
        "trace_error_max": float(np.abs(trace_K(ids) - ids.tau).max()),
    }
    w.json("report.json", {**_header(cfg), "solve": rep.to_json(), "certificates": cert})
    return EXIT_OK, (f"reconstruct: |H| <= {cert['hamiltonian_max']:.2e}, |M| <= {cert['momentum_max']:.2e}")


def run_converge(cfg, w, threads):
    ns = cfg.experiment.get("n_values", [16, 32, 64])
    _require(isinstance(ns, list) and len(ns) >= 3 and all(isinstance(n, int) and n >= 8 for n in ns),
             "experiment.n_values needs three or more integers >= 8")
    out = experiments.convergence_study(case_spec(cfg), ns, tol=cfg.tol)
    w.json("report.json", {**_header(cfg), "convergence": out})
    if out["exact"]:
        return EXIT_OK, "converge: exact (differences at roundoff)"
    return EXIT_OK, f"converge: solution orders {', '.join(f'{o:.3f}' for o in out['solution_orders'])}"


HANDLERS = {
    "solve": run_solve,
    "sweep": run_sweep,
    "table": run_table,
    "degenerate": run_degenerate,
    "liouville": run_liouville,
    "reconstruct": run_reconstruct,
    "yamabe": run_yamabe,
    "converge": run_converge,
}


def run(cfg, out, threads=1):
    """Execute a validated config; returns ``(exit_code, summary_line)``."""
    w = RunWriter(out)
    try:
        code, summary = HANDLERS[cfg.subcommand](cfg, w, threads)
    finally:
        w.close()
    return code, summary


def main(argv=None):
    p = argparse.ArgumentParser(prog="cfrg", description=__doc__.strip().splitlines()[0])
    p.add_argument("subcommand", nargs="?", choices=SUBCOMMANDS)
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--verbose", action="store_true")
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    threads = args.threads
    if threads is None:
        env = os.environ.get("CFRG_THREADS", "1")
        if not env.isdigit():
            print(f"error: CFRG_THREADS must be a positive integer, got {env!r}", file=sys.stderr)
            return EXIT_VALIDATION
        threads = int(env)
    if threads < 1:
        print("error: --threads must be a positive integer", file=sys.stderr)
        return EXIT_VALIDATION

    try:
        raw = json.loads(args.config.read_text())
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    except json.JSONDecodeError as exc:
        print(f"error: config is not valid JSON: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        cfg = parse_config(raw, args.subcommand)
        log.debug("config %s", cfg)
        code, summary = run(cfg, args.out, threads)
    except (ValidationError, PreconditionError, PositivityError, UnsupportedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(summary)
    return code


if __name__ == "__main__":
    sys.exit(main())
