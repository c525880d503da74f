"""Experiment orchestration: config files in, CSV/JSON plot data out.

A run is described by one YAML file (see README for annotated examples).
Every numerical parameter has a default, so a config naming only the
experiment kind and a network is runnable.  Results are written atomically;
a manifest records the resolved configuration, tool version, seed, wall
time, and the identities the run exercises.  Given the same config and seed
the result files are bit-identical.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from . import __version__, dynamics, greens, model, oracle, spectral, thermo
from .errors import ConfigError, OqnetError, StructuralError

EXPERIMENTS = ("dynamics", "master-coefficients", "heat-report", "nogo-scan",
               "third-law", "oracle-compare", "fdt-selftest")

NUMERIC_DEFAULTS = {
    "time_step": None,        # None: auto from 0.05 / max(frequency, cutoff)
    "t_max": 60.0,
    "omega_points": 200,
    "abs_tol": 1e-10,
    "rel_tol": 1e-8,
    "law_tol": 1e-8,
    "seed": 0,
    "trials": 100,
    "modes": 500,             # oracle oscillators per reservoir
    "exponent": 1.0,          # third-law power-law exponent
    "tbar_points": 8,
    "tbar_max_fraction": 0.01,  # top of the scanned decade vs min resonance
    "dt_fraction": 0.1,
    "multi_bath_fraction": 0.5,
    "sample_points": 200,     # output rows for time series
    "fdt_points": 50,
}

_ALLOWED_TOP = {"experiment", "network", "densities", "numerics", "output",
                "initial_state"}
_ALLOWED_NUMERICS = set(NUMERIC_DEFAULTS)
_ALLOWED_DENSITY = {"model", "site", "coupling", "exponent", "cutoff",
                    "cutoff_shape", "omega", "values"}


# ---------------------------------------------------------------------------
# config parsing


def load_config(path: str | Path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping with an 'experiment' key")
    return raw


def resolve_config(raw: dict, *, seed: int | None = None,
                   out_dir: str | None = None,
                   tol_overrides: dict | None = None) -> dict:
    for key in raw:
        if key not in _ALLOWED_TOP:
            raise ConfigError(f"unknown config key {key!r}")
    kind = raw.get("experiment")
    if kind not in EXPERIMENTS:
        raise ConfigError(
            f"experiment must be one of {', '.join(EXPERIMENTS)}; got {kind!r}")

    numerics = dict(NUMERIC_DEFAULTS)
    for key, val in (raw.get("numerics") or {}).items():
        if key not in _ALLOWED_NUMERICS:
            raise ConfigError(f"unknown numerics key {key!r}")
        numerics[key] = val
    for key, val in (tol_overrides or {}).items():
        if key not in _ALLOWED_NUMERICS:
            raise ConfigError(f"unknown tolerance override {key!r}")
        numerics[key] = val
    if seed is not None:
        numerics["seed"] = int(seed)

    output = dict(raw.get("output") or {})
    if out_dir is not None:
        output["directory"] = out_dir
    output.setdefault("directory", "oqnet-out")

    cfg = {
        "experiment": kind,
        "network": raw.get("network"),
        "densities": raw.get("densities"),
        "initial_state": raw.get("initial_state") or {"kind": "vacuum"},
        "numerics": numerics,
        "output": output,
    }
    return cfg


def build_density(entry: dict, where: str) -> spectral.SpectralDensity:
    if not isinstance(entry, dict):
        raise ConfigError(f"{where}: density must be a mapping")
    for key in entry:
        if key not in _ALLOWED_DENSITY:
            raise ConfigError(f"{where}: unknown density key {key!r}")
    kind = entry.get("model", "power_law")
    if kind == "power_law":
        try:
            return spectral.PowerLawDensity(
                site=int(entry["site"]),
                coupling=float(entry["coupling"]),
                exponent=float(entry.get("exponent", 1.0)),
                cutoff=float(entry["cutoff"]),
                cutoff_shape=str(entry.get("cutoff_shape", "sharp")),
            )
        except KeyError as exc:
            raise ConfigError(f"{where}: missing density key {exc.args[0]!r}") from None
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from None
    if kind == "tabulated":
        try:
            return spectral.TabulatedDensity(
                omega=np.asarray(entry["omega"], dtype=float),
                values=np.asarray(entry["values"], dtype=float),
            )
        except KeyError as exc:
            raise ConfigError(f"{where}: missing density key {exc.args[0]!r}") from None
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from None
    raise ConfigError(f"{where}: unknown density model {kind!r}")


def build_network(cfg: dict) -> model.NetworkSpec:
    net = cfg.get("network")
    if net is None:
        raise ConfigError("missing 'network' section for this experiment")
    if "coupling" not in net:
        raise ConfigError("network.coupling is required")
    regions = []
    for i, reg in enumerate(net.get("regions") or []):
        where = f"network.regions[{i}]"
        if "sites" not in reg:
            raise ConfigError(f"{where}.sites is required")
        reservoirs = []
        for j, res in enumerate(reg.get("reservoirs") or []):
            try:
                temperature = float(res["temperature"])
            except KeyError:
                raise ConfigError(
                    f"{where}.reservoirs[{j}].temperature is required") from None
            density = build_density(res.get("density"),
                                    f"{where}.reservoirs[{j}].density")
            reservoirs.append(model.Reservoir(temperature, density))
        try:
            regions.append(model.Region(id=str(reg.get("id", f"r{i}")),
                                        sites=tuple(reg["sites"]),
                                        reservoirs=tuple(reservoirs)))
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from None
    try:
        spec = model.NetworkSpec(coupling=np.asarray(net["coupling"], dtype=float),
                                 regions=tuple(regions))
    except ValueError as exc:
        raise ConfigError(f"network.coupling: {exc}") from None
    model.validate(spec)
    return spec


def default_densities(numerics: dict) -> list[spectral.SpectralDensity]:
    out = []
    for p in (0.5, 1.0, 3.0):
        for shape in (spectral.SHARP, spectral.EXPONENTIAL):
            out.append(spectral.PowerLawDensity(site=0, coupling=0.08, exponent=p,
                                                cutoff=4.0, cutoff_shape=shape))
    return out


def third_law_template(exponent: float) -> model.NetworkSpec:
    """Two-site power-law network with a safe renormalization shift."""
    cutoff = 4.0
    target_shift = 0.1  # gamma(0) per bath
    coupling = target_shift * exponent / cutoff ** exponent
    regions = tuple(
        model.Region(id=rid, sites=(i,), reservoirs=(
            model.Reservoir(0.01, spectral.PowerLawDensity(
                site=i, coupling=coupling, exponent=exponent, cutoff=cutoff)),))
        for i, rid in enumerate(("a", "b")))
    v = [[1.0, -0.3], [-0.3, 1.0]]
    return model.NetworkSpec(coupling=v, regions=regions)


# ---------------------------------------------------------------------------
# serialization


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def write_csv(path: Path, header: list[str], rows) -> None:
    tmp = tempfile.NamedTemporaryFile("w", newline="", delete=False,
                                      dir=path.parent, suffix=".tmp")
    try:
        writer = csv.writer(tmp, lineterminator="\r\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])
        tmp.close()
        os.replace(tmp.name, path)
    finally:
        if os.path.exists(tmp.name):
            os.unlink(tmp.name)


def write_json(path: Path, payload: dict) -> None:
    tmp = tempfile.NamedTemporaryFile("w", delete=False, dir=path.parent,
                                      suffix=".tmp")
    try:
        json.dump(payload, tmp, indent=2, sort_keys=True, allow_nan=True)
        tmp.write("\n")
        tmp.close()
        os.replace(tmp.name, path)
    finally:
        if os.path.exists(tmp.name):
            os.unlink(tmp.name)


def _matrix_header(name: str, k: int, k2: int | None = None) -> list[str]:
    k2 = k if k2 is None else k2
    return [f"{name}_{i}{j}" for i in range(k) for j in range(k2)]


def _json_float(x):
    if x is None:
        return None
    x = float(x)
    return x


# ---------------------------------------------------------------------------
# experiments


def _auto_step(spec: model.NetworkSpec, numerics: dict) -> float:
    if numerics["time_step"] is not None:
        return float(numerics["time_step"])
    return greens.suggested_step(spec)


def _sample_indices(n: int, wanted: int) -> np.ndarray:
    stride = max(1, n // max(1, wanted))
    return np.arange(0, n, stride)


def run_dynamics(cfg, out: Path) -> dict:
    spec = build_network(cfg)
    numerics = cfg["numerics"]
    h = _auto_step(spec, numerics)
    gf = greens.solve_G_time(spec, float(numerics["t_max"]), h)
    series = dynamics.propagator_series(gf)

    state_cfg = cfg["initial_state"]
    vr = greens.renormalized_potential(spec)
    if state_cfg.get("kind", "vacuum") == "thermal":
        state = dynamics.thermal_state(vr, float(state_cfg.get("temperature", 1.0)))
    elif state_cfg.get("kind") == "vacuum":
        state = dynamics.vacuum_state(spec.coupling)
    else:
        raise ConfigError(f"initial_state.kind {state_cfg.get('kind')!r} unknown")

    k = spec.dim
    idx = _sample_indices(gf.t.size, int(numerics["sample_points"]))
    rows_g = []
    rows_c = []
    for i in idx:
        rows_g.append([gf.t[i], *gf.G[i].ravel(), *gf.Gdot[i].ravel(),
                       *gf.Gddot[i].ravel()])
        pm = dynamics.PropagatorMatrices(t=float(gf.t[i]), phi=series.phi(i),
                                         sigma=series.sigma(i))
        evolved = dynamics.evolve_state(state, pm)
        rows_c.append([gf.t[i], *evolved.mean, *evolved.cov.ravel()])
    write_csv(out / "greens.csv",
              ["t", *_matrix_header("g", k), *_matrix_header("gdot", k),
               *_matrix_header("gddot", k)], rows_g)
    write_csv(out / "state.csv",
              ["t", *[f"mean_{i}" for i in range(2 * k)],
               *_matrix_header("cov", 2 * k)], rows_c)
    residual = greens.equation_residual(gf)
    return {
        "checks": ["response_equation_residual", "moment_map_evolution"],
        "results": {"equation_residual": residual,
                    "time_step": h, "grid_points": int(gf.t.size)},
        "outputs": ["greens.csv", "state.csv"],
    }


def run_master_coefficients(cfg, out: Path) -> dict:
    spec = build_network(cfg)
    numerics = cfg["numerics"]
    h = _auto_step(spec, numerics)
    gf = greens.solve_G_time(spec, float(numerics["t_max"]), h)
    series = dynamics.propagator_series(gf)
    coeffs = dynamics.master_coefficients(gf, series)
    k = spec.dim
    idx = _sample_indices(gf.t.size, int(numerics["sample_points"]))
    rows = []
    for i in idx:
        rows.append([coeffs.t[i], *coeffs.vr_t[i].ravel(),
                     *coeffs.gamma_t[i].ravel(), *coeffs.d_t[i].ravel(),
                     *coeffs.f_t[i].ravel(), float(coeffs.masked[i])])
    write_csv(out / "coefficients.csv",
              ["t", *_matrix_header("vr", k), *_matrix_header("gamma", k),
               *_matrix_header("d", k), *_matrix_header("f", k), "masked"],
              rows)
    return {
        "checks": ["generator_extraction", "masked_singular_times"],
        "results": {"masked_times": [float(t) for t in coeffs.masked_times],
                    "time_step": h},
        "outputs": ["coefficients.csv"],
    }


def run_heat_report(cfg, out: Path) -> dict:
    spec = build_network(cfg)
    numerics = cfg["numerics"]
    tm = thermo.TransportModel(spec, rel_tol=float(numerics["rel_tol"]) * 0.1)
    report = thermo.heat_currents(tm, rel_tol=float(numerics["rel_tol"]) * 0.1,
                                  law_tol=float(numerics["law_tol"]))
    upper = max(res.density.quad_upper for r in spec.regions
                for res in r.reservoirs)
    grid = np.linspace(upper * 1e-3, upper * 0.999, int(numerics["omega_points"]))
    htm = thermo.heat_transfer_matrix(tm, grid)
    r = len(spec.regions)
    write_csv(out / "heat_transfer_matrix.csv",
              ["omega", *_matrix_header("qdot", r)],
              ([w, *htm.qdot[i].ravel()] for i, w in enumerate(htm.omega)))
    payload = {
        "region_ids": list(report.region_ids),
        "currents": [float(q) for q in report.currents],
        "conservation_residual": float(report.conservation_residual),
        "entropy_flow": _json_float(report.entropy_flow),
        "entropy_flow_integral": _json_float(report.entropy_flow_integral),
        "entropy_residual": _json_float(report.entropy_residual),
        "verdicts": report.verdicts,
        "current_scale": float(report.current_scale),
        "heat_transfer_matrix": {
            "max_asymmetry": htm.max_asymmetry(),
            "max_offdiagonal": htm.max_offdiag(),
            "max_row_sum": htm.max_rowsum(),
            "im_form_residual": htm.im_form_residual,
        },
        "occupations": {
            "omega": [float(w) for w in report.occupation_omega],
            "mean_excitations": [[float(x) for x in row]
                                 for row in report.occupations],
        },
    }
    write_json(out / "heat_report.json", payload)
    return {
        "checks": ["heat_transfer_matrix_structure", "current_conservation",
                   "entropy_sign"],
        "results": {"currents": payload["currents"],
                    "verdicts": report.verdicts},
        "outputs": ["heat_report.json", "heat_transfer_matrix.csv"],
    }


def _nogo_trial(seed_seq: np.random.SeedSequence, multi_fraction: float,
                law_tol: float) -> dict:
    rng = np.random.default_rng(seed_seq)
    n_regions = int(rng.integers(2, 5))
    multi = bool(rng.random() < multi_fraction)
    spec = thermo.random_stable_network(rng, n_regions, multi_bath=multi)
    report = thermo.heat_currents(spec, rel_tol=1e-9, law_tol=law_tol)
    return {
        "regions": n_regions,
        "multi_bath": multi,
        "currents": [float(q) for q in report.currents],
        "coldest_region": report.verdicts["coldest_region"],
        "coldest_absorbs": report.verdicts["coldest_absorbs"],
        "clausius": report.verdicts["clausius"],
        "refrigerator_possible": report.verdicts["refrigerator_possible"],
    }


def run_nogo_scan(cfg, out: Path, threads: int = 1) -> dict:
    numerics = cfg["numerics"]
    trials = int(numerics["trials"])
    seqs = np.random.SeedSequence(int(numerics["seed"])).spawn(trials)
    law_tol = float(numerics["law_tol"])
    frac = float(numerics["multi_bath_fraction"])
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(
                lambda s: _nogo_trial(s, frac, law_tol), seqs))
    else:
        results = [_nogo_trial(s, frac, law_tol) for s in seqs]
    absorbed = sum(1 for r in results if r["coldest_absorbs"])
    payload = {
        "trials": results,
        "summary": {
            "n_trials": trials,
            "coldest_absorbs_count": absorbed,
            "refrigerator_found": any(r["refrigerator_possible"] for r in results),
        },
    }
    write_json(out / "nogo_scan.json", payload)
    return {
        "checks": ["refrigerator_no_go", "clausius_direction"],
        "results": payload["summary"],
        "outputs": ["nogo_scan.json"],
    }


def run_third_law(cfg, out: Path) -> dict:
    numerics = cfg["numerics"]
    exponent = float(numerics["exponent"])
    if cfg.get("network"):
        spec = build_network(cfg)
    else:
        spec = third_law_template(exponent)
    vr = greens.renormalized_potential(spec)
    w_min = float(np.sqrt(np.linalg.eigvalsh(vr).min()))
    t_hi = float(numerics["tbar_max_fraction"]) * w_min
    tbar = np.geomspace(0.1 * t_hi, t_hi, int(numerics["tbar_points"]))
    fit = thermo.third_law_scan(spec, exponent, tbar,
                                dt_fraction=float(numerics["dt_fraction"]))
    low = thermo.low_T_current(thermo.TransportModel(
        thermo.with_temperatures(spec, (tbar[0] + 0.5 * fit.delta_t,
                                        tbar[0] - 0.5 * fit.delta_t))))
    write_csv(out / "third_law_samples.csv", ["tbar", "entropy_flow"],
              zip(fit.tbar, fit.entropy_flows))
    payload = {
        "exponent": exponent,
        "slope": fit.slope,
        "target_slope": fit.target,
        "max_log_residual": fit.max_log_residual,
        "delta_t": fit.delta_t,
        "closed_form_ratio": low.ratio_closed_vs_generic,
        "series_form_ratio": low.ratio_sum_vs_generic,
    }
    write_json(out / "third_law.json", payload)
    return {
        "checks": ["entropy_scaling_exponent", "low_temperature_closed_form"],
        "results": payload,
        "outputs": ["third_law.json", "third_law_samples.csv"],
    }


def run_oracle_compare(cfg, out: Path) -> dict:
    spec = build_network(cfg)
    numerics = cfg["numerics"]
    modes = int(numerics["modes"])
    full = oracle.build_full_system(spec, modes)
    window = 0.5 * full.recurrence_time
    t_max = min(float(numerics["t_max"]), window) \
        if numerics["t_max"] is not None else window
    h = _auto_step(spec, numerics)
    gf = greens.solve_G_time(spec, t_max, h)
    series = dynamics.propagator_series(gf)
    state = dynamics.vacuum_state(spec.coupling)

    idx = _sample_indices(gf.t.size, int(numerics["sample_points"]))
    times = gf.t[idx].copy()
    evo = oracle.evolve_exact(full, state, times)
    scale = float(np.max(np.abs(evo.cov)))
    rows = []
    worst = 0.0
    for n, i in enumerate(idx):
        pm = dynamics.PropagatorMatrices(t=float(gf.t[i]), phi=series.phi(i),
                                         sigma=series.sigma(i))
        mine = dynamics.evolve_state(state, pm).cov
        err = float(np.max(np.abs(mine - evo.cov[n]))) / scale
        worst = max(worst, err)
        rows.append([times[n], err, *mine.ravel(), *evo.cov[n].ravel()])
    k = spec.dim
    write_csv(out / "oracle_compare.csv",
              ["t", "rel_error", *_matrix_header("cov", 2 * k),
               *_matrix_header("oracle_cov", 2 * k)], rows)
    payload = {
        "modes": modes,
        "recurrence_time": full.recurrence_time,
        "window": [0.0, t_max],
        "max_relative_covariance_error": worst,
    }
    write_json(out / "oracle_compare.json", payload)
    return {
        "checks": ["finite_bath_covariance_agreement"],
        "results": payload,
        "outputs": ["oracle_compare.json", "oracle_compare.csv"],
    }


def run_fdt_selftest(cfg, out: Path) -> dict:
    numerics = cfg["numerics"]
    entries = cfg.get("densities")
    if entries:
        densities = [build_density(e, f"densities[{i}]")
                     for i, e in enumerate(entries)]
    else:
        densities = default_densities(numerics)
    results = []
    worst = 0.0
    for d in densities:
        upper = d.cutoff if isinstance(d, spectral.PowerLawDensity) else d.omega[-1]
        grid = np.linspace(0.1 * upper, 0.9 * upper, int(numerics["fdt_points"]))
        rep = spectral.fdt_check(d, grid, dim=max(d.support_sites) + 1)
        worst = max(worst, rep.residual)
        results.append({
            "density": _density_payload(d),
            "residual": rep.residual,
            "residual_on_axis": rep.residual_on_axis,
        })
    write_json(out / "fdt_selftest.json",
               {"densities": results, "max_residual": worst})
    return {
        "checks": ["fluctuation_dissipation_identity"],
        "results": {"max_residual": worst},
        "outputs": ["fdt_selftest.json"],
    }


def _density_payload(d) -> dict:
    if isinstance(d, spectral.PowerLawDensity):
        return {"model": "power_law", "site": d.site, "coupling": d.coupling,
                "exponent": d.exponent, "cutoff": d.cutoff,
                "cutoff_shape": d.cutoff_shape}
    return {"model": "tabulated", "points": int(d.omega.size)}


_RUNNERS = {
    "dynamics": run_dynamics,
    "master-coefficients": run_master_coefficients,
    "heat-report": run_heat_report,
    "third-law": run_third_law,
    "oracle-compare": run_oracle_compare,
    "fdt-selftest": run_fdt_selftest,
}


def run(cfg: dict, *, threads: int = 1) -> Path:
    """Execute one experiment; returns the output directory."""
    out = Path(cfg["output"]["directory"])
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    kind = cfg["experiment"]
    if kind == "nogo-scan":
        info = run_nogo_scan(cfg, out, threads=threads)
    else:
        info = _RUNNERS[kind](cfg, out)
    manifest = {
        "experiment": kind,
        "tool_version": __version__,
        "seed": int(cfg["numerics"]["seed"]),
        "wall_time_s": time.perf_counter() - start,
        "threads": threads,
        "checks": info["checks"],
        "results": info["results"],
        "outputs": info["outputs"],
        "config": _config_echo(cfg),
    }
    write_json(out / "manifest.json", manifest)
    return out


def _config_echo(cfg: dict) -> dict:
    echo = {"experiment": cfg["experiment"], "numerics": dict(cfg["numerics"]),
            "output": dict(cfg["output"]), "initial_state": cfg["initial_state"]}
    if cfg.get("network") is not None:
        echo["network"] = cfg["network"]
    if cfg.get("densities") is not None:
        echo["densities"] = cfg["densities"]
    return echo


# ---------------------------------------------------------------------------
# describe (dry run)


def describe(cfg: dict) -> str:
    numerics = cfg["numerics"]
    lines = [f"experiment: {cfg['experiment']}",
             f"output directory: {cfg['output']['directory']}",
             f"seed: {numerics['seed']}"]
    if cfg["experiment"] in ("dynamics", "master-coefficients", "heat-report",
                             "oracle-compare"):
        spec = build_network(cfg)
        h = _auto_step(spec, numerics)
        lines.append(f"network: K={spec.dim}, regions={len(spec.regions)} "
                     f"({', '.join(spec.region_ids)})")
        steps = int(np.ceil(float(numerics['t_max']) / h))
        lines.append(f"time grid: step {h:.4g}, t_max {numerics['t_max']}, "
                     f"{steps} steps")
        if cfg["experiment"] == "heat-report":
            lines.append(f"frequency grid: {numerics['omega_points']} points")
        if cfg["experiment"] == "oracle-compare":
            full_cut = max(res.density.cutoff
                           for r in spec.regions for res in r.reservoirs
                           if isinstance(res.density, spectral.PowerLawDensity))
            rec = 2 * np.pi * int(numerics["modes"]) / full_cut
            lines.append(f"oracle: {numerics['modes']} modes per reservoir, "
                         f"recurrence time ~{rec:.4g}, valid window "
                         f"[0, {rec / 2:.4g}]")
            if rec / 2 > 4 * float(numerics["t_max"] or rec):
                lines.append("note: window much longer than t_max; "
                             "consider fewer modes")
    elif cfg["experiment"] == "nogo-scan":
        lines.append(f"randomized trials: {numerics['trials']} "
                     f"(multi-bath fraction {numerics['multi_bath_fraction']})")
    elif cfg["experiment"] == "third-law":
        lines.append(f"exponent p = {numerics['exponent']}, "
                     f"{numerics['tbar_points']} temperatures per decade scan")
    elif cfg["experiment"] == "fdt-selftest":
        n = len(cfg.get("densities") or default_densities(numerics))
        lines.append(f"densities: {n}, grid {numerics['fdt_points']} points each")
    lines.append("no computation performed (dry run)")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# entry point


def _parse_tol_overrides(pairs: list[str]) -> dict:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"--tol-override expects KEY=VALUE, got {pair!r}")
        key, val = pair.split("=", 1)
        try:
            out[key] = float(val)
        except ValueError:
            raise ConfigError(f"--tol-override {key}: {val!r} is not a number") from None
    return out


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="oqnet",
        description="Gaussian dynamics and heat transport for linear open "
                    "oscillator networks")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("run", "execute an experiment"),
                            ("describe", "print the resolved plan (dry run)")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="YAML experiment config")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--tol-override", action="append", default=[],
                       metavar="KEY=VAL")
    args = parser.parse_args(argv)

    threads = args.threads
    if threads is None:
        threads = int(os.environ.get("OQNET_THREADS", "1"))

    try:
        raw = load_config(args.config)
        cfg = resolve_config(raw, seed=args.seed, out_dir=args.out,
                             tol_overrides=_parse_tol_overrides(args.tol_override))
        if args.command == "describe":
            print(describe(cfg))
            return 0
        out = run(cfg, threads=max(1, threads))
        print(f"wrote {out}/manifest.json")
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except StructuralError as exc:
        print(f"network error: {exc}", file=sys.stderr)
        return 3
    except OqnetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
