"""Command line interface.

Subcommands: spectrum, propagate, efficiency, sweep, disorder, fit. Every
run writes <out>/<subcommand>.csv plus <out>/resolved_config.json; CSVs
start with a '# key=value' metadata block and use 17 significant digits.
Files are written atomically (temp file + rename) and contain no
timestamps, so identical runs produce byte-identical output.
"""

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__, config, model, observables, transport
from ._kernels import BACKEND
from .errors import ExcitranError


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return f"{value:.17g}"
    return str(value)


def _atomic_write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_csv(path, header, rows, meta):
    buf = io.StringIO()
    for key, value in meta.items():
        buf.write(f"# {key}={_fmt(value)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    _atomic_write(path, buf.getvalue())


def _read_csv(path):
    meta = {}
    with open(path, "r", encoding="utf-8") as fh:
        rows = []
        header = None
        for line in fh:
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    k, v = body.split("=", 1)
                    meta[k.strip()] = v.strip()
                continue
            rows.append(line.rstrip("\n"))
        reader = csv.reader(rows)
        header = next(reader)
        data = list(reader)
    return header, data, meta


def _base_meta(cfg, subcommand, threads):
    blob = json.dumps(cfg.resolved, sort_keys=True).encode()
    return {
        "version": __version__,
        "kernel": BACKEND,
        "subcommand": subcommand,
        "seed": cfg.seed,
        "threads": threads,
        "config_sha256": hashlib.sha256(blob).hexdigest(),
    }


def _emit_resolved(cfg, outdir):
    _atomic_write(
        Path(outdir) / "resolved_config.json",
        json.dumps(cfg.resolved, indent=2, sort_keys=True) + "\n",
    )


def cmd_spectrum(cfg, outdir, threads):
    graph = transport.scenario_graph(cfg.monomer, cfg.scenario)
    energies, _ = model.spectrum(graph)
    rows = [(i, e) for i, e in enumerate(energies)]
    meta = _base_meta(cfg, "spectrum", threads)
    meta["n_sites"] = graph.n_sites
    _write_csv(Path(outdir) / "spectrum.csv", ("index", "energy_cm1"), rows, meta)


def cmd_propagate(cfg, outdir, threads):
    bundle = transport.scenario_run(
        cfg.monomer, cfg.scenario, cfg.sample_times,
        partitions=tuple(cfg.partitions.values()),
        mi_pairs=cfg.mi_pairs, negativity_pairs=cfg.negativity_pairs,
        concurrence_pairs=cfg.concurrence_pairs, exciton_bands=cfg.exciton_bands,
        rtol=cfg.rtol, atol=cfg.atol,
    )
    graph = bundle.graph
    header = ["time_ps", "trace"]
    header += [f"pop_{lab}" for lab in graph.labels]
    header += [f"band_{name}" for name in bundle.band_populations]
    header += [f"xband_{name}" for name in bundle.exciton_band_populations]
    header.append("delocalization")
    header += [f"mi_{key}" for key in bundle.mutual_information]
    header += [f"neg_{key}" for key in bundle.negativity]
    header += [f"conc_{key}" for key in bundle.concurrence]

    rows = []
    for i, t in enumerate(bundle.times):
        row = [t, bundle.trace[i]]
        row += list(bundle.site_populations[i])
        row += [bundle.band_populations[name][i] for name in bundle.band_populations]
        row += [bundle.exciton_band_populations[name][i] for name in bundle.exciton_band_populations]
        row.append(bundle.delocalization[i])
        row += [bundle.mutual_information[key][i] for key in bundle.mutual_information]
        row += [bundle.negativity[key][i] for key in bundle.negativity]
        row += [bundle.concurrence[key][i] for key in bundle.concurrence]
        rows.append(row)

    meta = _base_meta(cfg, "propagate", threads)
    meta["gamma_phi"] = cfg.scenario.resolved_gamma_phi()
    meta["gamma_recomb"] = cfg.scenario.gamma_recomb
    if bundle.fit is not None:
        meta["fit_t1_ps"] = bundle.fit.t1
        meta["fit_t2_ps"] = bundle.fit.t2
    if bundle.transport is not None:
        meta["eta"] = bundle.transport.eta
        meta["tau_ps"] = bundle.transport.tau
    _write_csv(Path(outdir) / "propagate.csv", header, rows, meta)


def cmd_efficiency(cfg, outdir, threads):
    m, rho0 = transport.build_scenario_model(cfg.monomer, cfg.scenario)
    method = cfg.method
    if method == "auto":
        method = transport._pick_method("auto", m.gamma_phi, m.n_sites)
    res = transport._run_point(m, rho0, method, cfg.rtol, cfg.atol)
    meta = _base_meta(cfg, "efficiency", threads)
    meta["gamma_phi"] = m.gamma_phi
    _write_csv(
        Path(outdir) / "efficiency.csv",
        ("eta", "tau_ps", "method", "residual"),
        [(res.eta, res.tau, res.method, res.residual)],
        meta,
    )


def cmd_sweep(cfg, outdir, threads):
    result = transport.dephasing_sweep(
        cfg.monomer, cfg.scenario, cfg.sweep_gammas, threads=threads,
        method=cfg.method, rtol=cfg.rtol, atol=cfg.atol,
    )
    rows = [
        (r.gamma_phi, r.eta, r.tau, r.method, r.residual, r.error)
        for r in result.rows
    ]
    meta = _base_meta(cfg, "sweep", threads)
    meta.update(result.meta)
    _write_csv(
        Path(outdir) / "sweep.csv",
        ("gamma_phi_per_ps", "eta", "tau_ps", "method", "residual", "error"),
        rows, meta,
    )


def cmd_disorder(cfg, outdir, threads):
    result = transport.disorder_average(
        cfg.monomer, cfg.scenario, cfg.disorder, cfg.sweep_gammas,
        threads=threads, method=cfg.method, rtol=cfg.rtol, atol=cfg.atol,
    )
    rows = [
        (r.gamma_phi, r.eta_mean, r.eta_std, r.tau_mean, r.tau_std,
         r.n_realizations, r.degenerate_std, r.error)
        for r in result.rows
    ]
    meta = _base_meta(cfg, "disorder", threads)
    meta.update(result.meta)
    _write_csv(
        Path(outdir) / "disorder.csv",
        ("gamma_phi_per_ps", "eta_mean", "eta_std", "tau_mean", "tau_std",
         "n_realizations", "degenerate_std", "error"),
        rows, meta,
    )


def cmd_fit(cfg, outdir, threads, input_csv):
    if input_csv is None:
        raise ExcitranError("fit requires --input pointing at a propagate CSV")
    header, data, _ = _read_csv(input_csv)
    try:
        it = header.index("time_ps")
        iv = header.index("delocalization")
    except ValueError as exc:
        raise ExcitranError(
            "input CSV must have time_ps and delocalization columns"
        ) from exc
    pairs = [
        (float(row[it]), float(row[iv]))
        for row in data
        if row[iv] not in ("", "nan")
    ]
    times = np.array([p[0] for p in pairs])
    values = np.array([p[1] for p in pairs])
    fit = observables.fit_timescales(times, values)
    meta = _base_meta(cfg, "fit", threads)
    meta["input"] = str(input_csv)
    _write_csv(
        Path(outdir) / "fit.csv",
        ("y0", "A1", "t1_ps", "A2", "t2_ps", "residual_rms", "degenerate"),
        [(fit.y0, fit.A1, fit.t1, fit.A2, fit.t2, fit.residual_rms, fit.degenerate)],
        meta,
    )


COMMANDS = {
    "spectrum": cmd_spectrum,
    "propagate": cmd_propagate,
    "efficiency": cmd_efficiency,
    "sweep": cmd_sweep,
    "disorder": cmd_disorder,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="excitran",
        description="Exciton transport simulations on chromophore networks",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, help_text in (
        ("spectrum", "eigenvalues of the assembled structure"),
        ("propagate", "trajectory observables for the configured scenario"),
        ("efficiency", "single transport efficiency/transfer-time evaluation"),
        ("sweep", "efficiency across the dephasing grid"),
        ("disorder", "disorder-averaged efficiency across the dephasing grid"),
        ("fit", "double-exponential timescale fit of a propagate output"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", default="out", help="output directory (default: ./out)")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: EXCITRAN_THREADS or 1)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        if name == "fit":
            p.add_argument("--input", default=None, help="propagate CSV to fit")
    return parser


def _resolve_threads(value):
    if value is not None:
        return max(1, value)
    env = os.environ.get("EXCITRAN_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ExcitranError(f"EXCITRAN_THREADS is not an integer: {env!r}") from None
    return 1


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        threads = _resolve_threads(args.threads)
        cfg = config.parse_config(args.config, seed_override=args.seed)
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        _emit_resolved(cfg, outdir)
        if args.subcommand == "fit":
            cmd_fit(cfg, outdir, threads, args.input)
        else:
            COMMANDS[args.subcommand](cfg, outdir, threads)
    except ExcitranError as exc:
        payload = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(payload), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
