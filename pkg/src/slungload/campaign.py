"""Campaign matrix, run orchestration and artifact IO.

Each run directory holds:
  config.json      fully resolved run configuration
  trace.csv        100 Hz decimated trace (full rate behind a config flag)
  trace_full.bin   full-rate metric-relevant channels (custom container;
                   deterministic bytes, unlike zip-based formats)
  metrics.json     RunMetrics incl. gate report

Metrics are computed from the same (storage-precision) arrays that land in
trace_full.bin, so `slungload metrics <dir>` reproduces metrics.json exactly.
"""

from __future__ import annotations

import dataclasses
import json
import struct
import sys
from pathlib import Path

import numpy as np

from . import metrics as metrics_mod
from .analysis import pendulum_constants
from .dynamics import SimResult, simulate
from .params import DrydenParams, L1Params, MpcParams, ReshapeParams, RunConfig

TAU_PEND, _ = pendulum_constants(1.25)
CSV_DECIMATION = 10
MAGIC = b"SLTR0001"

# registered acceptance thresholds for the capability variants
THRESH_RMSE = 0.35      # m
THRESH_SAG = 100.0      # mm
THRESH_TENSION = 120.0  # N


# ---------------------------------------------------------------------------
# artifact IO
# ---------------------------------------------------------------------------

def write_arrays(path: Path, arrays: dict):
    """Deterministic multi-array container: magic, then per array a
    length-prefixed JSON header followed by raw little-endian bytes."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        for name, arr in arrays.items():
            arr = np.ascontiguousarray(arr)
            hdr = json.dumps({"name": name, "dtype": arr.dtype.str,
                              "shape": list(arr.shape)}).encode()
            fh.write(struct.pack("<I", len(hdr)))
            fh.write(hdr)
            fh.write(arr.tobytes())


def read_arrays(path: Path) -> dict:
    out = {}
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise ValueError(f"{path}: not a trace container")
        while True:
            raw = fh.read(4)
            if not raw:
                break
            (n,) = struct.unpack("<I", raw)
            hdr = json.loads(fh.read(n))
            dtype = np.dtype(hdr["dtype"])
            shape = tuple(hdr["shape"])
            count = int(np.prod(shape)) if shape else 1
            data = fh.read(count * dtype.itemsize)
            out[hdr["name"]] = np.frombuffer(data, dtype).reshape(shape)
    return out


def storage_traces(res: SimResult) -> dict:
    """Cast the metric-relevant channels to storage precision (this is what
    both metrics.json and trace_full.bin are computed from)."""
    return {
        "t": res.t.astype(np.float64),
        "pL": res.pL.astype(np.float32),
        "vL": res.vL.astype(np.float32),
        "ref_p": res.ref_p.astype(np.float32),
        "tension": res.tension.astype(np.float32),
        "thrust": res.thrust.astype(np.float32),
        "code": res.code.astype(np.int16),
        "active": res.active.astype(np.uint8),
        "clip_events": res.clip_events.astype(np.int16),
        "slot_angle": res.slot_angle.astype(np.float32),
    }


def write_csv(path: Path, res: SimResult, decimation=CSV_DECIMATION):
    n = res.drone_p.shape[1]
    cols = ["t", "pL_x", "pL_y", "pL_z", "vL_x", "vL_y", "vL_z",
            "ref_x", "ref_y", "ref_z"]
    for i in range(n):
        cols += [f"d{i}_px", f"d{i}_py", f"d{i}_pz",
                 f"d{i}_vx", f"d{i}_vy", f"d{i}_vz"]
    cols += [f"f{i}" for i in range(n)]
    cols += [f"T{i}" for i in range(n)]
    cols += [f"qp_code{i}" for i in range(n)]
    cols += ["gust_x", "gust_y", "gust_z", "wind_clip", "active_mask"]
    sel = slice(None, None, 1 if res.config.full_rate_csv else decimation)
    idx = np.arange(len(res.t))[sel]
    with open(path, "w") as fh:
        fh.write(f"# schema_version={res.config.schema_version}\n")
        fh.write(",".join(cols) + "\n")
        for k in idx:
            row = [res.t[k], *res.pL[k], *res.vL[k], *res.ref_p[k]]
            for i in range(n):
                row += [*res.drone_p[k, i], *res.drone_v[k, i]]
            row += list(res.thrust[k]) + list(res.tension[k])
            row += [int(c) for c in res.code[k]]
            row += [*res.gust[k], int(res.clip_events[k]),
                    int(sum(int(a) << i for i, a in enumerate(res.active[k])))]
            fh.write(",".join(f"{v:.9g}" if isinstance(v, float) else str(v)
                              for v in row) + "\n")


def run_metrics(res: SimResult) -> dict:
    traces = storage_traces(res)
    cfg = res.config
    ceiling = cfg.mpc.t_max if cfg.mpc.enabled else None
    m = metrics_mod.compute_metrics(
        traces, fault_times=[ev[0] for ev in cfg.faults],
        fault_drones=[ev[1] for ev in cfg.faults],
        f_max=cfg.sim.f_max, window=tuple(cfg.sim.eval_window),
        tension_ceiling=ceiling)
    m["run_info"] = res.info
    m["aborted"] = res.aborted
    m["abort_reason"] = res.abort_reason
    m["schema_version"] = cfg.schema_version
    return m


def run(config: RunConfig, out_dir: Path | None = None) -> dict:
    """Execute one run and (optionally) persist its artifacts."""
    res = simulate(config)
    m = run_metrics(res)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "config.json").write_text(config.to_json())
        write_csv(out_dir / "trace.csv", res)
        write_arrays(out_dir / "trace_full.bin", storage_traces(res))
        (out_dir / "metrics.json").write_text(
            json.dumps(m, indent=2, sort_keys=True))
    return m


def recompute_metrics(run_dir: Path) -> dict:
    """Re-derive metrics.json from the stored full-rate trace."""
    run_dir = Path(run_dir)
    traces = read_arrays(run_dir / "trace_full.bin")
    cfg = json.loads((run_dir / "config.json").read_text())
    faults = cfg.get("faults", [])
    ceiling = cfg["mpc"]["t_max"] if cfg["mpc"]["enabled"] else None
    m = metrics_mod.compute_metrics(
        traces, fault_times=[ev[0] for ev in faults],
        fault_drones=[ev[1] for ev in faults],
        f_max=cfg["sim"]["f_max"], window=tuple(cfg["sim"]["eval_window"]),
        tension_ceiling=ceiling)
    stored = json.loads((run_dir / "metrics.json").read_text())
    for key in ("run_info", "aborted", "abort_reason", "schema_version"):
        if key in stored:
            m[key] = stored[key]
    return m


# ---------------------------------------------------------------------------
# campaign matrix
# ---------------------------------------------------------------------------

V4_FAULTS = [(12.0, 0), (17.0, 2)]
V5_FAULTS = [(12.0, 0), (22.0, 2)]
MASS_SWEEP = (2.5, 3.0, 3.5, 3.9)
TMAX_SWEEP = (60.0, 70.0, 80.0, 90.0, 100.0)
DWELL_RATIOS = (0.5, 0.75, 1.0, 1.25, 1.5, 2.0)
GAMMA_SWEEP = (500.0, 2000.0, 1e4, 3e4, 5e4, 8e4)
TREF_SWEEP = (6.0, 8.0, 10.0, 12.0)


def _cfg(tag, **kw) -> RunConfig:
    c = RunConfig(tag=tag, **kw)
    return c


def variant_configs() -> dict:
    """The full campaign matrix, keyed by run tag."""
    import copy

    def base(tag, wind=True, faults=(), ff=True, probe=False):
        return RunConfig(tag=tag, wind=DrydenParams(enabled=wind),
                         faults=list(faults), ff_enabled=ff,
                         subthreshold_probe=probe)

    cfgs = {}
    cfgs["v1"] = base("v1", wind=False)
    cfgs["v2"] = base("v2")
    cfgs["v3"] = base("v3", faults=[(12.0, 0)])
    cfgs["v4"] = base("v4", faults=V4_FAULTS)
    cfgs["v5"] = base("v5", faults=V5_FAULTS)
    v6 = base("v6", faults=V4_FAULTS)
    v6.l1 = L1Params(enabled=True)
    v6.mpc = MpcParams(enabled=True, horizon=10)
    v6.reshape = ReshapeParams(enabled=True)
    cfgs["v6"] = v6

    for src, faults in (("v3", [(12.0, 0)]), ("v4", V4_FAULTS),
                        ("v5", V5_FAULTS)):
        cfgs[f"p2a_{src}_ffoff"] = base(f"p2a_{src}_ffoff", faults=faults,
                                        ff=False)

    for m_L in MASS_SWEEP:
        for mode in ("ffon", "ffoff", "ffoff_l1"):
            tag = f"p2b_m{m_L:g}_{mode}"
            c = base(tag, wind=False)
            c.sim = dataclasses.replace(c.sim, m_payload=m_L)
            c.ff_enabled = mode == "ffon"
            if mode == "ffoff_l1":
                c.l1 = L1Params(enabled=True)
            cfgs[tag] = c

    for t_max in TMAX_SWEEP:
        tag = f"p2c_tmax{int(t_max)}"
        c = base(tag, faults=V4_FAULTS)
        c.mpc = MpcParams(enabled=True, horizon=10, t_max=t_max)
        cfgs[tag] = c

    for t_ref in TREF_SWEEP:
        for reshape in (False, True):
            tag = f"p2d_tref{int(t_ref)}_{'reshape' if reshape else 'base'}"
            c = base(tag, faults=V4_FAULTS)
            c.ctrl = dataclasses.replace(c.ctrl, ref_period=t_ref)
            c.reshape = ReshapeParams(enabled=reshape)
            cfgs[tag] = c

    for r in DWELL_RATIOS:
        tag = f"dwell_r{r:g}"
        t2 = 12.0 + r * TAU_PEND
        cfgs[tag] = base(tag, faults=[(12.0, 0), (t2, 2)], probe=r < 1.0)

    for g in GAMMA_SWEEP:
        tag = f"gamma_{int(g)}"
        c = base(tag, wind=False, ff=False)
        c.sim = dataclasses.replace(c.sim, m_payload=3.9)
        c.l1 = L1Params(enabled=True, gamma=g)
        cfgs[tag] = c

    del copy
    return cfgs


CAPABILITY_VARIANTS = ("v1", "v2", "v3", "v4", "v5", "v6")


def variant_gates(tag: str, m: dict) -> dict:
    """Performance + domain gate verdicts for one capability variant."""
    g = m["gates"]
    checks = {
        "rmse": m["rmse_3d"] <= THRESH_RMSE,
        "sag": m["peak_sag_mm"] <= THRESH_SAG,
        "tension": m["peak_tension_N"] <= THRESH_TENSION,
        "h1a": g["pass_h1a"],
        "h1b": g["pass_h1b"],
        "h3": g["pass_h3"],
        "not_aborted": not m.get("aborted", False),
    }
    checks["all"] = all(checks.values())
    return checks


def run_campaign(out_dir: Path, select=None, jobs: int = 1,
                 progress=True) -> dict:
    """Run the (selected) campaign and assemble the consolidated summary."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfgs = variant_configs()
    if select:
        import fnmatch
        keep = {t for t in cfgs for pat in select if fnmatch.fnmatch(t, pat)}
        cfgs = {t: c for t, c in cfgs.items() if t in keep}

    results = {}
    items = list(cfgs.items())
    if jobs > 1:
        import concurrent.futures as cf
        with cf.ProcessPoolExecutor(max_workers=jobs) as ex:
            futs = {ex.submit(run, c, out_dir / t): t for t, c in items}
            for fut in cf.as_completed(futs):
                tag = futs[fut]
                try:
                    results[tag] = fut.result()
                except Exception as exc:  # isolate individual failures
                    results[tag] = {"error": str(exc)}
                if progress:
                    print(f"[campaign] {tag} done", file=sys.stderr)
    else:
        for tag, c in items:
            try:
                results[tag] = run(c, out_dir / tag)
            except Exception as exc:
                results[tag] = {"error": str(exc)}
            if progress:
                print(f"[campaign] {tag} done", file=sys.stderr)

    summary = build_summary(results)
    (out_dir / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True))
    return summary


def summarize_dir(out_dir: Path) -> dict:
    """Rebuild the consolidated summary from stored run directories (useful
    after running the matrix in several --select chunks)."""
    out_dir = Path(out_dir)
    results = {}
    for mpath in sorted(out_dir.glob("*/metrics.json")):
        results[mpath.parent.name] = json.loads(mpath.read_text())
    summary = build_summary(results)
    (out_dir / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True))
    return summary


def build_summary(results: dict) -> dict:
    """Consolidated tables mirroring the reported campaign outputs."""
    def ok(tag):
        return tag in results and "error" not in results[tag]

    summary = {"runs": sorted(results), "errors": {
        t: r["error"] for t, r in results.items() if "error" in r}}

    perf = {}
    for tag in CAPABILITY_VARIANTS:
        if not ok(tag):
            continue
        m = results[tag]
        perf[tag] = {
            "rmse_3d_m": m["rmse_3d"], "rmse_xy_m": m["rmse_xy"],
            "peak_sag_mm": m["peak_sag_mm"],
            "peak_tension_N": m["peak_tension_N"],
            "h1a_ms": m["gates"]["h1a_ms"], "h1b": m["gates"]["h1b"],
            "h3": m["gates"]["h3"],
            "max_thrust_ratio": m["actuator"]["max_ratio"],
            "gates": variant_gates(tag, m),
        }
    summary["performance"] = perf

    ablation = {}
    for src in ("v3", "v4", "v5"):
        off = f"p2a_{src}_ffoff"
        if ok(src) and ok(off):
            on, offm = results[src], results[off]
            sag_on = max(on["peak_sag_mm"], 1e-9)
            ablation[src] = {
                "rmse_ratio": offm["rmse_3d"] / on["rmse_3d"],
                "rmse_delta_pct": 100.0 * (offm["rmse_3d"] / on["rmse_3d"] - 1),
                "sag_ratio": offm["peak_sag_mm"] / sag_on,
                "sag_on_mm": on["peak_sag_mm"],
                "sag_off_mm": offm["peak_sag_mm"],
            }
    summary["ff_ablation"] = ablation

    mass = {}
    for m_L in MASS_SWEEP:
        row = {}
        for mode in ("ffon", "ffoff", "ffoff_l1"):
            tag = f"p2b_m{m_L:g}_{mode}"
            if ok(tag):
                row[mode] = {"rmse_3d_m": results[tag]["rmse_3d"],
                             "rmse_z_m": results[tag]["rmse_z"],
                             "peak_sag_mm": results[tag]["peak_sag_mm"]}
        mass[f"{m_L:g}"] = row
    summary["mass_sweep"] = mass

    ceiling = {}
    for t_max in TMAX_SWEEP:
        tag = f"p2c_tmax{int(t_max)}"
        if ok(tag):
            ceiling[f"{int(t_max)}"] = {
                "peak_tension_N": results[tag]["peak_tension_N"],
                "time_over_ceiling": results[tag].get("time_over_ceiling"),
                "mpc_all_solved": results[tag]["run_info"]["mpc_all_solved"],
            }
    summary["mpc_ceiling_sweep"] = ceiling

    recovery = {}
    for tag, m in results.items():
        if ok(tag) and m.get("per_fault"):
            recovery[tag] = [
                {k: pf[k] for k in ("t_star", "drone", "peak_error_mm",
                                    "t_rec_s", "iae_ms", "sag_mm", "chi_hat")}
                for pf in m["per_fault"]]
    summary["recovery"] = recovery

    dwell = {}
    for r in DWELL_RATIOS:
        tag = f"dwell_r{r:g}"
        if ok(tag) and results[tag].get("rho_hat"):
            dwell[f"{r:g}"] = results[tag]["rho_hat"]["excursion"]
    summary["dwell_sweep_rho_hat"] = dwell

    gamma = {}
    for g in GAMMA_SWEEP:
        tag = f"gamma_{int(g)}"
        if ok(tag):
            gamma[f"{int(g)}"] = {"rmse_z_m": results[tag]["rmse_z"],
                                  "rmse_3d_m": results[tag]["rmse_3d"],
                                  "aborted": results[tag].get("aborted", False)}
    summary["gamma_sweep"] = gamma

    reshape = {}
    for t_ref in TREF_SWEEP:
        for mode in ("base", "reshape"):
            tag = f"p2d_tref{int(t_ref)}_{mode}"
            if ok(tag):
                reshape.setdefault(f"{int(t_ref)}", {})[mode] = {
                    "rmse_3d_m": results[tag]["rmse_3d"],
                    "peak_tension_N": results[tag]["peak_tension_N"],
                    "peak_sag_mm": results[tag]["peak_sag_mm"],
                }
    summary["tref_reshape"] = reshape

    summary["all_capability_gates_pass"] = all(
        perf[t]["gates"]["all"] for t in perf) if perf else False
    return summary
