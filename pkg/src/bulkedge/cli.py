"""Command-line entry point.

    bulkedge <subcommand> [--config cfg.json] [--set key=value ...]
             [--out DIR] [--workers N] [--format csv|json]

Subcommands: bulk, edge, compare, localize, oracle, sweep.  Exit status is 2
for an invalid configuration (nothing is written), 3 for a hard numerical
failure or failed sweep tasks, 0 otherwise (soft flags go into ``warnings``).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from . import conductance as C
from . import localization as Lo
from .chern import chern_table
from .config import ConfigError, config_hash, parse_set, resolve, schema, schema_hash
from .ensemble import SweepPlan, execute_sweep
from .lattice import (DisorderSpec, Geometry, ModelSpec, SpecError, WallSpec, build_bulk,
                      build_edge, sample_disorder)
from .spectral import diagonalize, fermi_projector, switch_values
from .switches import SwitchProfile

log = logging.getLogger("bulkedge")

SUBCOMMANDS = ("bulk", "edge", "compare", "localize", "oracle", "sweep")


# ------------------------------------------------------------- helpers

def _switch(cfg, name, center=None, half_width=None):
    d = dict(cfg["switches"][name])
    if center is not None:
        d["center"] = center
    if half_width is not None:
        d["half_width"] = half_width
    return SwitchProfile(**d)


def _with_seed(model: ModelSpec, seed):
    return replace(model, disorder=replace(model.disorder, seed=int(seed)))


def _torus(model: ModelSpec):
    g = model.geometry
    return replace(model, geometry=Geometry(g.Lx, g.Ly, "periodic", "periodic"), wall=None)


def _cylinder(model: ModelSpec, wall: WallSpec):
    g = model.geometry
    return replace(model, geometry=Geometry(g.Lx, g.Ly, "open", "periodic"), wall=wall)


def _lowest_gap(model: ModelSpec):
    """Clean lowest gap (E_lo, E_hi) of the torus with the model's flux."""
    clean = replace(_torus(model), disorder=DisorderSpec())
    w = np.linalg.eigvalsh(build_bulk(clean).entries)
    k = w.size // model.flux.q
    shift = 0.0
    d = model.disorder
    if d.kind == "electric" and d.distribution == "uniform01":
        shift = d.W / 2.0
    return w[k - 1] + shift, w[k] + shift


def _window(cfg, model):
    w = cfg.get("window")
    if w is not None:
        return w["E_lo"], w["E_hi"]
    lo, hi = _lowest_gap(model)
    c, half = 0.5 * (lo + hi), 0.3 * (hi - lo)
    return c - half, c + half


def _g(cfg, model):
    lo, hi = _window(cfg, model)
    return _switch(cfg, "g", 0.5 * (lo + hi), 0.5 * (hi - lo))


def _wall(model: ModelSpec, a, E_hi):
    if model.wall is not None:
        return replace(model.wall, a=float(a))
    return WallSpec("electric", float(a), max(30.0, 10.0 * E_hi), 2.0)


def _E_grid(cfg, sd, q):
    if cfg.get("E_grid"):
        return [float(e) for e in cfg["E_grid"]]
    w = sd.eigenvalues
    k = w.size // q
    return [0.5 * (w[k - 1] + w[k])]


# ---------------------------------------------------------- subcommands

def run_bulk(cfg, model, args):
    rows, warn = [], []
    frac = cfg["trace_window_fraction"]
    for seed in cfg["seeds"]:
        spec = _with_seed(_torus(model), seed)
        H = build_bulk(spec)
        sd = diagonalize(H)
        geo = spec.geometry
        L1 = switch_values(_switch(cfg, "lambda1"), "x1", geo)
        L2 = switch_values(_switch(cfg, "lambda2"), "x2", geo)
        Q = C.bulk_window(geo, frac)
        coords = geo.coords().astype(float)
        chi0 = C.central_cells(geo, max(1, min(4, geo.Lx // 6, geo.Ly // 6)))
        for E in _E_grid(cfg, sd, spec.flux.q):
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                P = fermi_projector(sd, E)
            warn += [f"seed {seed}, E={E}: {c.message}" for c in caught]
            s, im = C.hall_switch(P, L1, L2, Q, return_imag=True)
            alt1 = C.hall_double_commutator(P, L1, L2, Q)
            alt2, meta = C.hall_position_local(P, coords[:, 0], coords[:, 1], chi0, True)
            if meta["touches_boundary"]:
                warn.append(f"seed {seed}: position-operator window touches the boundary")
            if abs(im) > 1e-8:
                warn.append(f"seed {seed}, E={E}: imaginary Hall residual {im:.2e}")
            rows.append({"seed": seed, "E": E, "sigma_hall": s, "sigma_hall_alt1": alt1,
                         "sigma_hall_alt2": alt2,
                         "residual_dec_hall": C.check_dec_hall(P, L1, L2, Q),
                         "residual_alt1": abs(s - alt1)})
    return rows, warn, {}


def run_edge(cfg, model, args):
    rows, warn = [], []
    g = _g(cfg, model)
    frac = cfg["trace_window_fraction"]
    Ts = [float(t) for t in cfg["T_grid"]]
    for seed in cfg["seeds"]:
        V = None
        for a in cfg["a_grid"]:
            spec = _with_seed(_cylinder(model, _wall(model, a, g.hi)), seed)
            if spec.wall.height <= g.hi:
                warn.append(f"wall height {spec.wall.height} does not exceed window top {g.hi}")
            if V is None:
                V = sample_disorder(spec.disorder, spec.geometry)
            sd = diagonalize(build_edge(spec, V))
            geo = spec.geometry
            L1 = switch_values(_switch(cfg, "lambda1"), "x1", geo)
            L2 = switch_values(_switch(cfg, "lambda2"), "x2", geo)
            Q = C.strip_window(geo, frac)
            edge = C.edge_conductance_regularized(sd, g, L1, L2, Ts, Q)
            rem = C.remainder_trace_average(sd, g, L1, L2, Ts)
            zt = C.zero_trace_check(sd, g, L1, L2, Q)
            unreg = C.edge_conductance_unregularized(sd, g, L2, Q)
            for T, e, r in zip(Ts, edge, rem):
                rows.append({"seed": seed, "a": a, "T": T, "sigma_edge_reg": e,
                             "remainder_avg": r, "zero_trace": zt, "sigma_edge_unreg": unreg})
    return rows, warn, {}


def matched_bulk_value(sd, g, L1, L2, Q, nodes=5):
    """-int g'(E) sigma_Hall(E) dE on Gauss-Legendre nodes over supp g'."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    E = g.center + g.half_width * x
    vals = [C.hall_switch_spectral(sd, e, L1, L2, Q) for e in E]
    return float(-g.half_width * np.sum(w * g.derivative(E) * np.array(vals)))


def run_compare(cfg, model, args):
    rows, warn = [], []
    g = _g(cfg, model)
    frac = cfg["trace_window_fraction"]
    a = max(cfg["a_grid"])
    T = max(float(t) for t in cfg["T_grid"])
    for seed in cfg["seeds"]:
        bulk = _with_seed(_torus(model), seed)
        edge = _with_seed(_cylinder(model, _wall(model, a, g.hi)), seed)
        V = sample_disorder(bulk.disorder, bulk.geometry)
        sdb = diagonalize(build_bulk(bulk, V))
        sde = diagonalize(build_edge(edge, V))
        gb, ge = bulk.geometry, edge.geometry
        l1, l2 = _switch(cfg, "lambda1"), _switch(cfg, "lambda2")
        sh = matched_bulk_value(sdb, g, switch_values(l1, "x1", gb),
                                switch_values(l2, "x2", gb), C.bulk_window(gb, frac))
        se = C.edge_conductance_regularized(sde, g, switch_values(l1, "x1", ge),
                                            switch_values(l2, "x2", ge), T,
                                            C.strip_window(ge, frac))
        rows.append({"seed": seed, "a": a, "T": T, "sigma_hall": sh, "sigma_edge_reg": se,
                     "abs_diff": abs(se - sh)})
    d = np.array([r["abs_diff"] for r in rows])
    summary = {"mean_abs_diff": float(d.mean()), "p90_abs_diff": float(np.percentile(d, 90))}
    return rows, warn, summary


def run_localize(cfg, model, args):
    rows, warn = [], []
    loc = cfg["localize"]
    lo, hi = loc["bump"] or _window(cfg, model)
    bump = Lo.EnergyBump(lo, hi)
    Ts = [float(t) for t in cfg["T_grid"]]
    sds = []
    for seed in cfg["seeds"]:
        spec = _with_seed(_torus(model), seed)
        sd = diagonalize(build_bulk(spec))
        sds.append(sd)
        geo = spec.geometry
        E = _E_grid(cfg, sd, spec.flux.q)[0]
        try:
            fit, _ = Lo.projector_kernel_decay(fermi_projector(sd, E), geo, cell=loc["cell"])
            fd = (fit.rate, fit.stretch, fit.fit_residual)
        except ValueError as exc:
            warn.append(f"seed {seed}: decay fit rejected ({exc})")
            fd = (float("nan"),) * 3
        c0 = [Lo.central_site(geo)]
        for T in Ts:
            m = Lo.time_averaged_moment(sd, geo, loc["m"], loc["zeta"], bump, T, c0)
            rows.append({"seed": seed, "T": T, "moment": m, "decay_rate": fd[0],
                         "decay_stretch": fd[1], "decay_residual": fd[2]})
    geo = _torus(model).geometry
    summary = {"averaged_moment": [
        {"T": T, "mean": mu, "stderr": se} for T in Ts
        for mu, se in [Lo.averaged_moment(sds, geo, loc["m"], loc["zeta"], bump, T,
                                          [Lo.central_site(geo)])]]}
    return rows, warn, summary


def run_oracle(cfg, model, args):
    f = model.flux
    rows = [{"p": f.p, "q": f.q, **r} for r in chern_table(f, cfg["oracle"]["bz_grid"])]
    return rows, [], {}


def run_sweep(cfg, model, args):
    sw = cfg["sweep"]
    axes = sw["axes"] or {"seed": list(cfg["seeds"])}
    lo, hi = _window(cfg, model)
    opts = {"window": [lo, hi], "trace_window_fraction": cfg["trace_window_fraction"],
            "lambda1": cfg["switches"]["lambda1"], "lambda2": cfg["switches"]["lambda2"],
            "g_smoothness": cfg["switches"]["g"].get("smoothness", "smoothstep5"),
            "moments": {"m": cfg["localize"]["m"], "zeta": cfg["localize"]["zeta"],
                        "bump": cfg["localize"]["bump"] or [lo, hi]}}
    out = Path(args.out) / f"sweep_{config_hash('sweep', cfg)}"
    plan = SweepPlan(model, axes, sw["probes"], str(out), sw["base_seed"], opts)
    report, ncomputed = execute_sweep(plan, workers=args.workers)
    rows = []
    for p in report["points"]:
        for q, st in p["stats"].items():
            rows.append({"point": json.dumps(p["point"], sort_keys=True), "quantity": q, **st})
    warn = [f"task {k} failed" for k in report["failed"]]
    return rows, warn, {"n_tasks": report["n_tasks"], "n_done": report["n_done"],
                        "computed_now": ncomputed, "failed": report["failed"]}


RUNNERS = {"bulk": run_bulk, "edge": run_edge, "compare": run_compare,
           "localize": run_localize, "oracle": run_oracle, "sweep": run_sweep}


# --------------------------------------------------------------- output

def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(type(x))


def write_outputs(subcommand, cfg, rows, warn, summary, out_dir, fmt):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    h = config_hash(subcommand, cfg)
    path = out_dir / f"{subcommand}_{h}.{fmt}"
    prov = {"subcommand": subcommand, "config": cfg, "schema_hash": schema_hash(),
            "version": __version__}
    if fmt == "json":
        doc = dict(prov, rows=rows, summary=summary, warnings=warn)
        path.write_text(json.dumps(doc, sort_keys=True, indent=1, default=_jsonable))
    else:
        cols = schema()["x-csv-columns"][subcommand]
        with open(path, "w", newline="") as fh:
            fh.write(f"# provenance: {json.dumps(prov, sort_keys=True, default=_jsonable)}\n")
            if summary:
                fh.write(f"# summary: {json.dumps(summary, sort_keys=True, default=_jsonable)}\n")
            for w in warn:
                fh.write(f"# warning: {w}\n")
            wr = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
            wr.writeheader()
            for r in rows:
                wr.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                             for k, v in r.items()})
    return path


def build_parser():
    ap = argparse.ArgumentParser(prog="bulkedge", description=__doc__.splitlines()[0])
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", help="JSON run configuration")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override a config field (dotted path, JSON value); repeatable")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--format", choices=("csv", "json"), default=None)
    ap.add_argument("-v", "--verbose", action="count", default=0)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        user = {}
        if args.config:
            try:
                user = json.loads(Path(args.config).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError("--config", str(exc)) from None
        over = parse_set(args.set)
        if args.format:
            over["format"] = args.format
        cfg, model = resolve(user, over)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    level = logging.DEBUG if (args.verbose or cfg["verbosity"]) > 1 else (
        logging.INFO if (args.verbose or cfg["verbosity"]) else logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(message)s")
    t0 = time.perf_counter()
    try:
        rows, warn, summary = RUNNERS[args.subcommand](cfg, model, args)
    except (ConfigError, SpecError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        log.exception("hard failure")
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    path = write_outputs(args.subcommand, cfg, rows, warn, summary, args.out, cfg["format"])
    log.info("wrote %s in %.1fs", path, time.perf_counter() - t0)
    print(path)
    if args.subcommand == "sweep" and summary.get("failed"):
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
