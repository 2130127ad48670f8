"""Command-line front end.

Analyses are driven by a single JSON configuration document; flags only
select the subcommand, config path, output directory and verbosity.
Unknown configuration keys are rejected by name.  Outputs are
deterministic: identical config and version produce byte-identical
files.

Exit codes: 0 = ran to completion (any verdict), 2 = configuration
error, 3 = numerical failure.

The environment variable CONDLAB_THREADS caps internal (BLAS) thread
parallelism; it is applied before the numerical modules are imported,
so it is effective for console invocations.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys

from .errors import CondlabError, ConfigError, NumericalError

log = logging.getLogger("condlab")

_TOP_KEYS = {"region", "grid", "family", "schedule", "analysis", "probe",
             "scan", "spectrum", "output_dir"}
_GRID_KEYS = {"points_per_axis", "margin"}
_SCHEDULE_KEYS = {"values", "start", "ratio", "count"}
_ANALYSIS_KEYS = {"theta_bounded", "theta_divergent", "rank_probe_count", "n_r"}
_PROBE_KEYS = {"diameter", "kind", "center"}
_SCAN_KEYS = {"sigma", "count", "max_shift", "axis"}
_SPECTRUM_KEYS = {"sigma", "k_count", "k_span", "axis"}

_DEFAULT_POINTS = {1: 4096, 2: 256, 3: 96}


def _check_keys(doc: dict, allowed: set, where: str) -> None:
    if not isinstance(doc, dict):
        raise ConfigError(f"section '{where}' must be an object")
    for key in doc:
        if key not in allowed:
            raise ConfigError(f"unknown key '{key}' in section '{where}'")


def parse_config(doc: dict) -> dict:
    """Validate the configuration document strictly; returns it unchanged."""
    from .states import validate_family_spec

    _check_keys(doc, _TOP_KEYS, "config")
    if "region" not in doc:
        raise ConfigError("config is missing the 'region' section")
    if "family" not in doc:
        raise ConfigError("config is missing the 'family' section")
    validate_family_spec(doc["family"])
    if "grid" in doc:
        _check_keys(doc["grid"], _GRID_KEYS, "grid")
    if "schedule" in doc:
        _check_keys(doc["schedule"], _SCHEDULE_KEYS, "schedule")
    if "analysis" in doc:
        _check_keys(doc["analysis"], _ANALYSIS_KEYS, "analysis")
        theta_b = float(doc["analysis"].get("theta_bounded", 0.05))
        theta_d = float(doc["analysis"].get("theta_divergent", 0.25))
        if not 0.0 < theta_b < theta_d:
            raise ConfigError(
                f"thresholds must satisfy 0 < theta_bounded < theta_divergent, "
                f"got ({theta_b}, {theta_d})"
            )
    if "probe" in doc:
        _check_keys(doc["probe"], _PROBE_KEYS, "probe")
    if "scan" in doc:
        _check_keys(doc["scan"], _SCAN_KEYS, "scan")
    if "spectrum" in doc:
        _check_keys(doc["spectrum"], _SPECTRUM_KEYS, "spectrum")
    return doc


def _schedule_values(doc: dict) -> list[float]:
    sched = doc.get("schedule")
    if sched is None:
        raise ConfigError("config is missing the 'schedule' section")
    if "values" in sched:
        if any(k in sched for k in ("start", "ratio", "count")):
            raise ConfigError("schedule takes either 'values' or start/ratio/count")
        values = [float(v) for v in sched["values"]]
    else:
        for key in ("start", "ratio", "count"):
            if key not in sched:
                raise ConfigError(f"geometric schedule is missing '{key}'")
        start, ratio, count = float(sched["start"]), float(sched["ratio"]), int(sched["count"])
        values = [start * ratio**i for i in range(count)]
    if len(values) < 1:
        raise ConfigError("schedule is empty")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ConfigError("schedule must be strictly increasing")
    return values


def _build_context(doc: dict):
    """Region, grid and family from a validated config."""
    from .states import build_family, region_from_dict
    from .geometry import Grid

    region = region_from_dict(doc["region"])
    grid_doc = doc.get("grid", {})
    points = int(grid_doc.get("points_per_axis", _DEFAULT_POINTS[region.dimension]))
    margin = float(grid_doc.get("margin", 0.0))
    grid = Grid.covering(region, points, margin=margin)
    family = build_family(doc["family"], region, grid)
    return region, grid, family


def _probe_for(doc: dict, region, grid):
    from .geometry import Region, WaveFunction, bump_probe
    import numpy as np

    probe_doc = doc.get("probe")
    if probe_doc is None or "diameter" not in probe_doc:
        raise ConfigError("the 'probe' section with a 'diameter' is required here")
    diameter = float(probe_doc["diameter"])
    if not diameter < region.diameter:
        raise ConfigError("probe diameter must be smaller than the region diameter")
    center = probe_doc.get("center", region.center)
    sub = Region(
        dimension=region.dimension,
        shape=region.shape,
        diameter=diameter,
        center=tuple(float(c) for c in center),
    )
    kind = probe_doc.get("kind", "bump")
    if kind == "bump":
        return bump_probe(sub, grid)
    if kind == "indicator":
        mask = grid.mask(sub)
        vals = np.where(mask, 1.0 + 0.0j, 0.0)
        return WaveFunction(grid, vals, sub).normalized()
    raise ConfigError(f"unknown probe kind '{kind}'")


def _fmt(value: float) -> str:
    return f"{value:.17g}"


# ---------------------------------------------------------------------------
# subcommands


def cmd_family(doc: dict, out_dir: str) -> None:
    """Per-sigma occupation tables plus totals and truncation defects."""
    from .states import family_to_dict

    _, _, family = _build_context(doc)
    schedule = _schedule_values(doc)
    occ_path = os.path.join(out_dir, "occupations.csv")
    tot_path = os.path.join(out_dir, "totals.csv")
    with open(occ_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("sigma,k,nu\n")
        for sigma in schedule:
            occ = family.occupations(sigma)
            for k, nu in enumerate(occ):
                fh.write(f"{_fmt(sigma)},{k},{_fmt(nu)}\n")
    with open(tot_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("sigma,total,truncation_defect\n")
        for sigma in schedule:
            occ = family.occupations(sigma)
            fh.write(
                f"{_fmt(sigma)},{_fmt(float(occ.sum()))},"
                f"{_fmt(family.truncation_defect(sigma))}\n"
            )
    with open(os.path.join(out_dir, "family.json"), "w", encoding="utf-8") as fh:
        json.dump(family_to_dict(family), fh, indent=2, sort_keys=True)
        fh.write("\n")
    log.info("wrote %s and %s", occ_path, tot_path)


def cmd_criterion(doc: dict, out_dir: str) -> None:
    """Run the full detection pipeline and emit report.json / report.csv."""
    from .analysis import Thresholds, assemble_report

    _, _, family = _build_context(doc)
    schedule = _schedule_values(doc)
    if len(schedule) < 4:
        raise ConfigError("the criterion needs a schedule of at least 4 points")
    a_doc = doc.get("analysis", {})
    thresholds = Thresholds(
        bounded=float(a_doc.get("theta_bounded", 0.05)),
        divergent=float(a_doc.get("theta_divergent", 0.25)),
    )
    report = assemble_report(
        family,
        schedule,
        thresholds=thresholds,
        rank_probe_count=int(a_doc.get("rank_probe_count", 16)),
    )
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    report.write_csv(os.path.join(out_dir, "report.csv"))
    log.info("verdict: %s", report.verdict)


def _grid_meta(grid) -> str:
    return (
        f"npoints={'x'.join(str(n) for n in grid.npoints)}"
        f" spacing={','.join(_fmt(h) for h in grid.spacing)}"
    )


def cmd_scan(doc: dict, out_dir: str) -> None:
    """Correlation scan CSV over a translation set."""
    import numpy as np

    from .geometry import discrete_volume
    from .odlro import correlation_scan

    region, grid, family = _build_context(doc)
    scan_doc = doc.get("scan", {})
    _check_keys(scan_doc, _SCAN_KEYS, "scan")
    sigma = float(scan_doc.get("sigma", _schedule_values(doc)[-1] if "schedule" in doc else 0))
    if sigma <= 0:
        raise ConfigError("the scan needs a positive 'sigma' (or a schedule)")
    probe = _probe_for(doc, region, grid)
    count = int(scan_doc.get("count", 17))
    axis = int(scan_doc.get("axis", 0))
    if not 0 <= axis < region.dimension:
        raise ConfigError(f"scan axis {axis} is out of range")
    max_shift = float(
        scan_doc.get("max_shift", (region.diameter - probe.support.diameter) / 2.0 * 0.98)
    )
    h = grid.spacing[axis]
    shifts = np.round(np.linspace(-max_shift, max_shift, count) / h) * h
    xs = np.zeros((count, region.dimension))
    xs[:, axis] = shifts
    n_r = float(doc.get("analysis", {}).get("n_r", 1.0))
    pdm = family.at(sigma)
    scan = correlation_scan(pdm, probe, xs, n_r=n_r)
    vol, vol0 = discrete_volume(grid, region), discrete_volume(grid, probe.support)
    if scan.n_c / vol <= n_r / vol0:
        log.warning(
            "condensate density n_C/|O| = %.6g does not exceed n_R/|O0| = %.6g; "
            "no ODLRO plateau is expected at this sigma",
            scan.n_c / vol,
            n_r / vol0,
        )
    scan.write_csv(
        os.path.join(out_dir, "scan.csv"),
        meta={"sigma": _fmt(sigma), "grid": _grid_meta(grid)},
    )
    log.info("max |C - P| = %.6g (error scale %.6g)", scan.max_deviation, scan.error_scale)


def cmd_spectrum(doc: dict, out_dir: str) -> None:
    """Momentum-distribution CSV along a wave-vector line through the
    fitted condensate momentum."""
    import numpy as np

    from .analysis import extract_singular_function, fit_momentum
    from .odlro import line_k_grid, momentum_distribution, peak_tail_report

    region, grid, family = _build_context(doc)
    spec_doc = doc.get("spectrum", {})
    sigma = float(spec_doc.get("sigma", _schedule_values(doc)[-1] if "schedule" in doc else 0))
    if sigma <= 0:
        raise ConfigError("the spectrum needs a positive 'sigma' (or a schedule)")
    pdm = family.at(sigma)
    top = extract_singular_function(pdm)
    fit = fit_momentum(top.function, region)
    p = np.asarray(fit.momentum)
    n_c = max(pdm.occupation(top.function), 0.0)
    axis = int(spec_doc.get("axis", 0))
    if not 0 <= axis < region.dimension:
        raise ConfigError(f"spectrum axis {axis} is out of range")
    direction = np.zeros(region.dimension)
    direction[axis] = 1.0
    k_span = float(spec_doc.get("k_span", 24.0 * math.pi / region.diameter))
    k_count = int(spec_doc.get("k_count", 481))
    ks = line_k_grid(p, direction, k_span, k_count)
    spectrum = momentum_distribution(pdm, ks)
    tail = peak_tail_report(spectrum, n_c, region.diameter, p)
    spectrum.write_csv(
        os.path.join(out_dir, "spectrum.csv"),
        n_c=n_c,
        p=p,
        meta={"sigma": _fmt(sigma), "grid": _grid_meta(grid),
              "n_C": _fmt(n_c), "n_R": _fmt(float(doc.get("analysis", {}).get("n_r", 1.0)))},
    )
    summary = {
        "sigma": sigma,
        "n_C": n_c,
        "momentum": list(map(float, p)),
        "momentum_residual": fit.residual,
        "peak_wavevector": list(map(float, spectrum.peak_wavevector)),
        "peak_value": spectrum.peak_value,
        "sharpness": tail.sharpness,
        "bound_onset_u": tail.bound_onset_u,
        "envelope_exponent": tail.envelope_exponent,
        "envelope_amplitude": tail.envelope_amplitude,
    }
    with open(os.path.join(out_dir, "spectrum_report.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    log.info("peak at %s with N = %.6g", spectrum.peak_wavevector.tolist(), spectrum.peak_value)


_COMMANDS = {
    "family": cmd_family,
    "criterion": cmd_criterion,
    "scan": cmd_scan,
    "spectrum": cmd_spectrum,
}


def _apply_thread_cap() -> None:
    cap = os.environ.get("CONDLAB_THREADS")
    if not cap:
        return
    for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, cap)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="condlab",
        description="Proper-condensate detection and ODLRO verification "
        "for quasifree bosonic state families.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in _COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__.splitlines()[0].lower())
        p.add_argument("--config", required=True, help="path to the JSON config document")
        p.add_argument("--out", default=None, help="output directory (default: config output_dir or '.')")
        p.add_argument("--verbose", action="store_true", help="log progress to stderr")
    return parser


def main(argv=None) -> int:
    _apply_thread_cap()
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(message)s",
    )
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        print(f"condlab: cannot read config: {exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"condlab: config is not valid JSON: {exc}", file=sys.stderr)
        return 2
    try:
        parse_config(doc)
        out_dir = args.out or doc.get("output_dir") or "."
        os.makedirs(out_dir, exist_ok=True)
        from filelock import FileLock, Timeout

        lock = FileLock(os.path.join(out_dir, ".condlab.lock"))
        try:
            with lock.acquire(timeout=0):
                _COMMANDS[args.command](doc, out_dir)
        except Timeout:
            print(
                f"condlab: output directory '{out_dir}' is locked by another run",
                file=sys.stderr,
            )
            return 2
    except ConfigError as exc:
        print(f"condlab: config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"condlab: numerical failure: {exc}", file=sys.stderr)
        return 3
    except CondlabError as exc:
        print(f"condlab: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
