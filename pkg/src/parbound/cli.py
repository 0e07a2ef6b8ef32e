"""Command line entry point: ``parbound run|validate|list-experiments``.

Exit status: 0 when every verdict passes, 1 when an experiment fails its
checks or aborts, 2 for invalid manifests.
"""

import argparse
import sys
import traceback
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import matplotlib
import numpy as np
import scipy

from .errors import ConfigError, ParboundError
from .harness import EXPERIMENTS, run_experiment
from .manifest import read_manifest
from .plotting import write_svg

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

DESCRIPTIONS = {
    "hopf": "centerline growth u(rho e_n, 0)/rho against the exponential Dini factor",
    "upper_bound": "sup |u - g(0,0)| / rho on Q_rho and the boundary modulus check",
    "almost_positivity": "largest negative lobe keeping u >= 0 on Q_1/2",
    "boundary_harnack": "Hoelder quotient of u/v for two positive solutions",
    "dyadic_consistency": "normalized special solutions at consecutive dyadic scales",
    "interior_modulus": "oscillation exponent and the dyadic Green bound",
}


def package_version():
    try:
        return version("parbound")
    except PackageNotFoundError:
        return "unknown"


def provenance(manifest):
    return [f"manifest_sha256: {manifest.digest()}",
            f"experiment: {manifest.experiment}",
            f"versions: parbound {package_version()}, numpy {np.__version__}, "
            f"scipy {scipy.__version__}, matplotlib {matplotlib.__version__}"]


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def run(manifest, out=None, stream=sys.stdout):
    """Run one manifest and write its artifacts; returns the exit status."""
    out = Path(out) if out is not None else manifest.output_dir()
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as err:
        raise ConfigError(f"output directory {out} is not writable: {err}", key="output") from err
    name = manifest.experiment
    header = provenance(manifest)
    try:
        report = run_experiment(manifest.config)
    except ParboundError as err:
        text = "\n".join(f"# {h}" for h in header) + "\n" \
            + f"experiment: {name}\nverdict: fail\nerror: {type(err).__name__}: {err}\n"
        _write(out / f"{name}.failure.txt", text)
        print(text, end="", file=stream)
        return EXIT_FAIL
    csv_text = report.to_csv(header)
    _write(out / f"{name}.csv", csv_text)
    _write(out / f"{name}.txt", report.summary())
    if manifest.plots:
        write_svg(csv_text, out / f"{name}.svg", title=name.replace("_", " "))
    print(report.summary(), end="", file=stream)
    print(f"artifacts: {out}", file=stream)
    return EXIT_PASS if report.passed else EXIT_FAIL


def build_parser():
    p = argparse.ArgumentParser(prog="parbound",
                                description="Boundary and interior estimates for parabolic "
                                            "equations, measured at desk scale.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a manifest and write CSV, summary and SVG")
    r.add_argument("manifest")
    r.add_argument("--output", help="override the manifest's output directory")
    v = sub.add_parser("validate", help="parse and validate a manifest without running it")
    v.add_argument("manifest")
    sub.add_parser("list-experiments", help="list experiment kinds")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "list-experiments":
        for k in EXPERIMENTS:
            print(f"{k:20s} {DESCRIPTIONS[k]}")
        return EXIT_PASS
    try:
        manifest = read_manifest(args.manifest)
        if args.command == "validate":
            print(f"valid: {manifest.experiment} manifest, sha256 {manifest.digest()}")
            return EXIT_PASS
        return run(manifest, args.output)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except ParboundError as err:
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        traceback.print_exc(file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
