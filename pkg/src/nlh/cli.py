"""``nlh`` command line: ``accuracy``, ``bistability`` and ``verify``.

Exit codes: 0 success, 1 numerical failure, 2 usage or configuration error.
Every run writes into ``<out>/<command>-<UTC timestamp>-<config hash>/``
together with a ``manifest.json`` listing the files it produced.
"""
import argparse
import csv
import hashlib
import json
import logging
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .adaptive import AdaptError
from .config import ConfigError, config_to_dict, load_config
from .experiments import CavitySweep, check_feasible, estimator_ratios, hysteresis_width, run_accuracy
from .solver import LinearSolveError
from .verify import format_report, run_checks

log = logging.getLogger("nlh")

EXIT_OK, EXIT_NUMERICAL, EXIT_USAGE = 0, 1, 2


class RunManifest:
    """Record of one command: resolved config, input hash, outputs, times."""

    def __init__(self, command, config, config_bytes, out_root):
        self.command = command
        self.config = config
        self.input_hash = hashlib.sha256(
            command.encode() + b"\0" + config_bytes + __version__.encode()).hexdigest()
        self.started = datetime.now(timezone.utc)
        stamp = self.started.strftime("%Y%m%dT%H%M%S")
        self.run_dir = Path(out_root) / f"{command}-{stamp}-{self.input_hash[:10]}"
        self.run_dir.mkdir(parents=True, exist_ok=False)
        self.outputs = []

    def path(self, name):
        self.outputs.append(name)
        return self.run_dir / name

    def write(self, status):
        missing = [o for o in self.outputs if not (self.run_dir / o).exists()]
        if status == "ok" and missing:
            raise RuntimeError(f"declared outputs were not written: {missing}")
        data = {"command": self.command, "version": __version__, "status": status,
                "input_hash": self.input_hash, "config": self.config,
                "outputs": self.outputs, "started": self.started.isoformat(),
                "finished": datetime.now(timezone.utc).isoformat()}
        (self.run_dir / "manifest.json").write_text(json.dumps(data, indent=2) + "\n")


def _write_rows(path, columns, rows):
    """CSV with one ``# name: description`` comment per column."""
    with open(path, "w", newline="") as fh:
        for name, doc in columns:
            fh.write(f"# {name}: {doc}\n")
        w = csv.writer(fh)
        w.writerow([n for n, _ in columns])
        w.writerows(rows)


def _attach_log(manifest):
    handler = logging.FileHandler(manifest.path("run.log"))
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    logging.getLogger("nlh").addHandler(handler)
    return handler


def _start(args, section):
    path = Path(args.config)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    cfg = load_config(path, section)
    if section == "accuracy":
        check_feasible(cfg)
    manifest = RunManifest(section, config_to_dict(cfg), path.read_bytes(), args.out)
    return cfg, manifest


# ----------------------------------------------------------------------
def cmd_accuracy(args):
    cfg, manifest = _start(args, "accuracy")
    handler = _attach_log(manifest)
    try:
        result = run_accuracy(cfg)
        rate_rows = []
        for method, trace in result.traces.items():
            trace.write_csv(manifest.path(f"trace_{method}.csv"))
            rate_rows.append([method, min(cfg.rate_window, len(trace.records)),
                              result.rates[method]])
            err_eta, eta_proj = estimator_ratios(trace)
            _write_rows(manifest.path(f"estimator_{method}.csv"),
                        [("n_elements", "number of triangles"),
                         ("error_over_eta", "H1 error divided by the global estimator"),
                         ("eta_over_projection", "estimator over projection error plus "
                                                 "oscillation (empty without projection)")],
                        [[int(r.n_elements), a, "" if np.isnan(b) else b]
                         for r, a, b in zip(trace.records, err_eta, eta_proj)])
        _write_rows(manifest.path("rates.csv"),
                    [("method", "discretisation and refinement"),
                     ("window", "number of final iterations in the fit"),
                     ("slope", "least-squares slope of log relative H1 error vs log N")],
                    rate_rows)
        manifest.write("ok")
    except Exception:
        manifest.write("failed")
        raise
    finally:
        logging.getLogger("nlh").removeHandler(handler)
        handler.close()
    for method, slope in result.rates.items():
        print(f"{method:<16} slope {slope:+.3f}")
    print(f"results in {manifest.run_dir}")
    return EXIT_OK


def cmd_bistability(args):
    cfg, manifest = _start(args, "bistability")
    handler = _attach_log(manifest)
    try:
        sweep = CavitySweep(cfg)
        result = sweep.run()
        _write_rows(manifest.path("branches.csv"),
                    [("I", "incident intensity"),
                     ("energy", "energy norm of u_h over that of the reference beam"),
                     ("branch", "up, down or mid"),
                     ("converged", "1 if Newton converged"),
                     ("iterations", "Newton iterations of the final solve"),
                     ("halvings", "intensity-step halvings needed"),
                     ("jump", "1 if the energy left proportional scaling")],
                    [[p.I, p.energy, p.branch, int(p.converged), p.iterations,
                      p.halvings, int(p.jump)] for p in result.points])
        for label, I, branch in cfg.markers:
            coeffs = result.solutions.get((branch, I))
            if coeffs is None and branch != "mid":
                coeffs = sweep.branch_state(result, branch, I)
            if coeffs is None:
                log.warning("marker %s: no %s solution at I=%g", label, branch, I)
                continue
            sweep.dump_field(coeffs, manifest.path(f"marker_{label}.vtk"))
        manifest.write("ok")
    except Exception:
        manifest.write("failed")
        raise
    finally:
        logging.getLogger("nlh").removeHandler(handler)
        handler.close()
    for p in result.jumps:
        print(f"{p.branch} branch jumps at I={p.I:g}")
    width = hysteresis_width(result)
    if width:
        print(f"branches differ by >20% for I in [{min(width):g}, {max(width):g}]")
    print(f"results in {manifest.run_dir}")
    return EXIT_OK


def cmd_verify(args):
    checks = run_checks()
    sys.stdout.write(format_report(checks))
    return EXIT_OK if all(c.passed for c in checks) else EXIT_NUMERICAL


# ----------------------------------------------------------------------
def build_parser():
    parser = argparse.ArgumentParser(prog="nlh", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func, help_ in (("accuracy", cmd_accuracy, "notched-domain accuracy study"),
                              ("bistability", cmd_bistability, "Kerr cavity hysteresis sweep")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="INI file")
        p.add_argument("--out", default="runs", help="parent directory for the run")
        p.set_defaults(func=func)
    p = sub.add_parser("verify", help="oracle and invariant self-checks")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    t0 = time.perf_counter()
    try:
        code = args.func(args)
    except ConfigError as exc:
        print(f"nlh: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AdaptError, LinearSolveError, FloatingPointError) as exc:
        print(f"nlh: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    log.info("%s finished in %.1f s", args.command, time.perf_counter() - t0)
    return code


if __name__ == "__main__":
    sys.exit(main())
