"""Disorder ensembles and parameter sweeps with resumable JSON-lines logs."""
from __future__ import annotations

import hashlib
import itertools
import json
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .lattice import (DisorderSpec, Geometry, ModelSpec, SpecError, WallSpec,
                      build_bulk, build_edge, sample_disorder)

AXES = ("E", "W", "a", "T", "seed", "L")
PROBES = ("hall", "edge", "moments", "decay", "diagnostics")
# axes that change the disorder realization; E, T and a never do
REALIZATION_AXES = ("W", "L", "seed")


def _canon(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def derive_seed(base_seed, key) -> int:
    h = hashlib.sha256(f"{int(base_seed)}:{key}".encode()).digest()
    return int.from_bytes(h[:8], "little") & 0x7FFF_FFFF_FFFF_FFFF


@dataclass
class SweepPlan:
    base: ModelSpec
    axes: dict
    probes: list = field(default_factory=lambda: ["hall"])
    output_dir: str = "sweep_out"
    base_seed: int = 0
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        bad = set(self.axes) - set(AXES)
        if bad:
            raise SpecError(f"unknown sweep axes {sorted(bad)}; allowed {AXES}")
        badp = set(self.probes) - set(PROBES)
        if badp:
            raise SpecError(f"unknown probes {sorted(badp)}; allowed {PROBES}")
        for k, v in self.axes.items():
            if not isinstance(v, (list, tuple)) or len(v) == 0:
                raise SpecError(f"axis {k!r} must be a non-empty list")

    def tasks(self):
        names = sorted(self.axes)
        base = self.base.to_json()
        out = []
        for combo in itertools.product(*(self.axes[n] for n in names)):
            values = dict(zip(names, combo))
            key = hashlib.sha256(f"{base}|{_canon(values)}".encode()).hexdigest()[:16]
            out.append({"key": key, "values": values})
        return out

    def to_dict(self):
        return {"base": self.base.to_dict(), "axes": self.axes, "probes": list(self.probes),
                "output_dir": str(self.output_dir), "base_seed": self.base_seed,
                "options": self.options}

    @classmethod
    def from_dict(cls, d):
        return cls(ModelSpec.from_dict(d["base"]), d["axes"], d.get("probes", ["hall"]),
                   d.get("output_dir", "sweep_out"), d.get("base_seed", 0),
                   d.get("options", {}))


@dataclass
class RunRecord:
    key: str
    status: str
    values: dict
    result: dict = field(default_factory=dict)
    wall_time: float = 0.0
    meta: dict = field(default_factory=dict)

    def to_json(self):
        return _canon({"key": self.key, "status": self.status, "values": self.values,
                       "result": self.result, "wall_time": self.wall_time, "meta": self.meta})


# ------------------------------------------------------------- models

def realization_seed(plan: SweepPlan, values) -> int:
    rkey = _canon({k: values[k] for k in REALIZATION_AXES if k in values})
    return derive_seed(plan.base_seed, rkey)


def task_models(plan: SweepPlan, values):
    """(bulk_spec, edge_spec, realization) for one task; edge_spec may be None."""
    base = plan.base
    geo = base.geometry
    if "L" in values:
        L = int(values["L"])
        geo = Geometry(L, L, geo.bc_x1, geo.bc_x2)
    dis = base.disorder
    kind = dis.kind if dis.kind != "none" else "electric"
    W = float(values.get("W", dis.W))
    dis = DisorderSpec(kind if W > 0 else "none", W, None if W == 0 else dis.distribution,
                       0, realization_seed(plan, values))
    bulk = ModelSpec(Geometry(geo.Lx, geo.Ly, "periodic", "periodic"), base.flux, dis, None,
                     base.energy_shift)
    wall = base.wall or WallSpec(**plan.options.get("wall", {}))
    if "a" in values:
        wall = replace(wall, a=float(values["a"]))
    edge = ModelSpec(Geometry(geo.Lx, geo.Ly, "open", "periodic"), base.flux, dis, wall,
                     base.energy_shift)
    return bulk, edge, sample_disorder(dis, bulk.geometry)


def pair_bulk_edge(plan: SweepPlan):
    """One matched (bulk, edge) pair per distinct realization of the plan.

    Both members are built from the same disorder vector; the geometries
    must coincide site by site for that to make sense.
    """
    pairs = {}
    for t in plan.tasks():
        v = t["values"]
        rs = realization_seed(plan, v)
        if rs in pairs:
            continue
        bulk, edge, V = task_models(plan, v)
        if (bulk.geometry.Lx, bulk.geometry.Ly) != (edge.geometry.Lx, edge.geometry.Ly):
            raise SpecError("bulk and edge geometries differ; cannot share the realization")
        pairs[rs] = {"realization_seed": rs, "values": {k: v[k] for k in v if k in REALIZATION_AXES},
                     "bulk": bulk, "edge": edge, "realization": V}
    return [pairs[k] for k in sorted(pairs)]


# ------------------------------------------------------------- tasks

def _run_task(plan_dict, task):
    # imported here so worker processes pay the import once
    from . import conductance as C
    from . import localization as Lo
    from .spectral import diagonalize, fermi_projector, switch_values
    from .switches import SwitchProfile

    plan = SweepPlan.from_dict(plan_dict)
    opt = plan.options
    values = task["values"]
    t0 = time.perf_counter()
    bulk, edge, V = task_models(plan, values)
    l1 = SwitchProfile(**opt.get("lambda1", {"center": 0.0, "half_width": 1.0}))
    l2 = SwitchProfile(**opt.get("lambda2", {"center": 0.0, "half_width": 1.0}))
    gwin = opt.get("window", [2.6, 3.4])
    g = SwitchProfile(0.5 * (gwin[0] + gwin[1]), 0.5 * (gwin[1] - gwin[0]),
                      smoothness=opt.get("g_smoothness", "smoothstep5"))
    frac = opt.get("trace_window_fraction", 0.25)
    E = float(values.get("E", g.center))
    T = float(values.get("T", 1000.0))
    out = {}
    flags = []
    need_bulk = any(p in plan.probes for p in ("hall", "moments", "decay"))
    if need_bulk:
        sdb = diagonalize(build_bulk(bulk, V))
        gb = bulk.geometry
        L1b, L2b = switch_values(l1, "x1", gb), switch_values(l2, "x2", gb)
        Qb = C.bulk_window(gb, frac)
    if "hall" in plan.probes:
        P = fermi_projector(sdb, E)
        val, im = C.hall_switch(P, L1b, L2b, Qb, return_imag=True)
        out["sigma_hall"] = val
        out["residual_alt1"] = abs(val - C.hall_double_commutator(P, L1b, L2b, Qb))
        if abs(im) > 1e-8:
            flags.append("imaginary part of hall trace above 1e-8")
    if "decay" in plan.probes:
        fit, _ = Lo.projector_kernel_decay(fermi_projector(sdb, E), bulk.geometry)
        out["decay_rate"] = fit.rate
        out["decay_residual"] = fit.fit_residual
    if "moments" in plan.probes:
        mo = opt.get("moments", {})
        lo, hi = mo.get("bump", gwin)
        out["moment"] = Lo.time_averaged_moment(
            sdb, bulk.geometry, mo.get("m", 0.2), mo.get("zeta", 1.0), Lo.EnergyBump(lo, hi),
            T, [Lo.central_site(bulk.geometry)])
    if "edge" in plan.probes or "diagnostics" in plan.probes:
        sde = diagonalize(build_edge(edge, V))
        ge = edge.geometry
        L1e, L2e = switch_values(l1, "x1", ge), switch_values(l2, "x2", ge)
        Qe = C.strip_window(ge, frac)
        if "edge" in plan.probes:
            out["sigma_edge_reg"] = C.edge_conductance_regularized(sde, g, L1e, L2e, T, Qe)
        if "diagnostics" in plan.probes:
            out["zero_trace"] = C.zero_trace_check(sde, g, L1e, L2e, Qe)
            out["remainder"] = C.remainder_trace_average(sde, g, L1e, L2e, T)
    out = {k: float(v) for k, v in out.items()}
    return {"result": out, "flags": flags, "wall_time": time.perf_counter() - t0,
            "realization_seed": realization_seed(plan, values)}


def _execute_one(plan_dict, task):
    try:
        r = _run_task(plan_dict, task)
        return RunRecord(task["key"], "done", task["values"], r["result"], r["wall_time"],
                         {"flags": r["flags"], "realization_seed": r["realization_seed"]})
    except Exception as exc:  # a failed task must not abort the sweep
        return RunRecord(task["key"], "failed", task["values"], {}, 0.0,
                         {"error": f"{type(exc).__name__}: {exc}",
                          "traceback": traceback.format_exc(limit=5)})


def load_records(path):
    recs = {}
    if os.path.exists(path):
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                d = json.loads(line)
                recs[d["key"]] = RunRecord(**d)
    return recs


def aggregate(plan: SweepPlan, records):
    """Per-point ensemble statistics over the seed axis; independent of record order."""
    groups = {}
    for rec in sorted(records.values(), key=lambda r: r.key):
        if rec.status != "done":
            continue
        point = {k: v for k, v in rec.values.items() if k != "seed"}
        gk = _canon(point)
        groups.setdefault(gk, {"point": point, "samples": []})
        groups[gk]["samples"].append((_canon(rec.values), rec.result))
    rows = []
    for gk in sorted(groups):
        grp = groups[gk]
        samples = [r for _, r in sorted(grp["samples"], key=lambda s: s[0])]
        stats = {}
        for q in sorted({q for r in samples for q in r}):
            x = np.array([r[q] for r in samples if q in r], dtype=float)
            stats[q] = {"mean": float(x.mean()),
                        "stderr": float(x.std(ddof=1) / np.sqrt(x.size)) if x.size > 1 else 0.0,
                        "min": float(x.min()), "max": float(x.max()), "n": int(x.size)}
        rows.append({"point": grp["point"], "stats": stats})
    failed = sorted(r.key for r in records.values() if r.status == "failed")
    plan_d = plan.to_dict()
    plan_d.pop("output_dir")
    return {"plan": plan_d, "points": rows, "failed": failed,
            "n_tasks": len(plan.tasks()), "n_done": sum(r.status == "done" for r in records.values())}


def execute_sweep(plan: SweepPlan, workers: int = 1, log_name="records.jsonl"):
    """Run all pending tasks and return (aggregated report, number computed now).

    Records are appended to ``output_dir/log_name`` by this process only;
    rerunning skips tasks already marked done.
    """
    out = Path(plan.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    log = out / log_name
    records = load_records(log)
    pending = [t for t in plan.tasks()
               if t["key"] not in records or records[t["key"]].status != "done"]
    plan_dict = plan.to_dict()
    with open(log, "a") as fh:
        if workers <= 1:
            for t in pending:
                rec = _execute_one(plan_dict, t)
                records[rec.key] = rec
                fh.write(rec.to_json() + "\n")
                fh.flush()
        else:
            with ProcessPoolExecutor(max_workers=workers) as ex:
                futs = [ex.submit(_execute_one, plan_dict, t) for t in pending]
                for f in as_completed(futs):
                    rec = f.result()
                    records[rec.key] = rec
                    fh.write(rec.to_json() + "\n")
                    fh.flush()
    report = aggregate(plan, records)
    with open(out / "aggregate.json", "w") as fh:
        fh.write(json.dumps(report, sort_keys=True, indent=1))
    return report, len(pending)
