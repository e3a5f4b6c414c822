"""Command-line front end: reproducible artifact generation.

Commands
--------
levels       level energies, state characters, transition table vs field
find-clocks  sensitivity scan, rapid-T2 map, clock points (or angular map)
cce          ensemble coherence curves and fits at a list of fields
sweep-tc     Hahn T2 grid over temperature x concentration
cpmg         T2(N) under CPMG with power-law scaling fit
converge     decay curves vs expansion order / dipolar cutoff / bath radius
fit          re-fit existing curve CSV files

Every command writes the resolved configuration, a version/seed stamp and
its CSV/JSON artifacts into --out; reruns with identical inputs are
byte-identical.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (aggregate_histogram, ensemble_t2, fit_power_law,
                       fit_stretched_exponential)
from .cce import (CoherenceCurve, DimensionBudgetError, ClusterBudgetError,
                  PulseSequence, cce_coherence, config_seed, factorized_coherence)
from .clockfinder import (NoiseModel, apply_noise, angular_scan, calibrate_sigma,
                          fibonacci_sphere, field_scan, find_clock_points,
                          TransitionSensitivity)
from .config import ConfigError, RunConfig
from .constants import ANGSTROM
from .io import write_csv, write_curve_csv, write_curve_json, write_json
from .clockfinder import track_states
from .lattice import CapacityError, build_electron_bath, build_nuclear_bath
from .spincore import transition_table

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CAPACITY = 3
EXIT_NUMERIC = 4


def _write_meta(cfg: RunConfig, out: Path, command: str) -> None:
    cfg.dump(out / "resolved_config.yaml")
    write_json(out / "meta.json", {
        "command": command,
        "version": __version__,
        "master_seed": cfg["run"]["master_seed"],
        "n_configs": cfg["run"]["n_configs"],
    })


# ---------------------------------------------------------------------------
# ensemble plumbing (top-level functions so worker processes can pickle them)

def _curve_task(payload) -> tuple[int, CoherenceCurve | None, str | None]:
    (k, cfg_data, field_t, seq_kind, seq_n, bath_kind) = payload
    cfg = RunConfig(data=cfg_data)
    try:
        curve = _single_curve(cfg, k, np.array(field_t), PulseSequence(seq_kind, seq_n),
                              bath_kind)
        return k, curve, None
    except Exception as exc:  # noqa: BLE001 - reported per index by contract
        return k, None, f"{type(exc).__name__}: {exc}"


def _baths_for(cfg: RunConfig, k: int, field: np.ndarray, bath_kind: str) -> dict:
    """Bath realizations for ensemble member k, keyed by species channel."""
    cell = cfg.cell()
    bath_cfg = cfg["bath"]
    seed = config_seed(cfg["run"]["master_seed"], k)
    out = {}
    if bath_kind in ("nuclear", "combined"):
        out["nuclear"] = build_nuclear_bath(
            cell, bath_cfg["r_bath_a"] * ANGSTROM, field=field, seed=seed,
            o17_abundance=bath_cfg["o17_abundance"],
            temperature=bath_cfg["temperature_k"])
    if bath_kind in ("electron", "combined"):
        r_e = bath_cfg["r_bath_electron_a"]
        out["electron"] = build_electron_bath(
            cell, concentration=bath_cfg["concentration_er"],
            temperature=bath_cfg["temperature_k"], field=field, seed=seed,
            r_bath=None if r_e is None else r_e * ANGSTROM,
            target_count=bath_cfg["electron_target_count"])
    return out


def _single_curve(cfg: RunConfig, k: int, field: np.ndarray, seq: PulseSequence,
                  bath_kind: str) -> CoherenceCurve:
    model = cfg.model()
    pair = tuple(cfg["coherence"]["pair"])
    baths = _baths_for(cfg, k, field, bath_kind)
    parts = []
    if "nuclear" in baths:
        parts.append(cce_coherence(baths["nuclear"], model, pair, seq,
                                   cfg.nuclear_cce()))
    if "electron" in baths:
        bath = baths["electron"]
        if len(bath.spins) == 0:
            times = cfg.time_grid()
            parts.append(CoherenceCurve(times=times,
                                        values=np.ones(len(times), dtype=complex),
                                        metadata={"kind": "empty-electron-bath",
                                                  "seed": int(bath.seed)}))
        else:
            parts.append(cce_coherence(bath, model, pair, seq,
                                       cfg.electron_cce(bath.r_bath)))
    if len(parts) == 1:
        return parts[0]
    return factorized_coherence(parts[-1], parts[0])


def _run_ensemble(cfg: RunConfig, field: np.ndarray, seq: PulseSequence,
                  bath_kind: str, workers: int):
    n = cfg["run"]["n_configs"]
    payloads = [(k, cfg.data, tuple(float(x) for x in field), seq.kind, seq.n_pulses,
                 bath_kind) for k in range(n)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_curve_task, payloads))
    else:
        results = [_curve_task(p) for p in payloads]
    results.sort(key=lambda r: r[0])
    curves = [c for _, c, _ in results]
    failures = [(k, err) for k, _, err in results if err is not None]
    ok = [c for c in curves if c is not None]
    if not ok:
        capacity_kinds = ("CapacityError", "ClusterBudgetError", "DimensionBudgetError")
        if all(err.startswith(capacity_kinds) for _, err in failures):
            raise CapacityError(f"all ensemble members failed: {failures}")
        raise RuntimeError(f"all ensemble members failed: {failures}")
    stack = np.stack([c.values for c in ok])
    mean = CoherenceCurve(times=ok[0].times.copy(),
                          values=stack.real.mean(0) + 1j * stack.imag.mean(0),
                          metadata={"kind": "ensemble-mean", "n_ok": len(ok)})
    return curves, mean, failures


# ---------------------------------------------------------------------------
# commands

def _tracked_levels(model, scan_cfg: dict):
    axis = np.asarray(scan_cfg["axis"], dtype=float)
    axis = axis / np.linalg.norm(axis)
    step = scan_cfg["b_step_mt"] * 1e-3
    mags = np.arange(scan_cfg["b_min_mt"] * 1e-3,
                     scan_cfg["b_max_mt"] * 1e-3 + step / 2, step)
    return mags, track_states(model, [m * axis for m in mags])


def cmd_levels(cfg: RunConfig, out: Path) -> None:
    model = cfg.model()
    scan_cfg = cfg["scan"]
    mags, systems = _tracked_levels(model, scan_cfg)
    level_rows = []
    trans_rows = []
    threshold = scan_cfg["significance_threshold"]
    for b, es in zip(mags, systems):
        for i in range(es.dim):
            level_rows.append((b, i, es.energies[i], es.sz[i], es.iz[i]))
        for rec in transition_table(es, model, threshold=threshold):
            trans_rows.append((b, rec.pair[0], rec.pair[1], rec.frequency, rec.strength))
    write_csv(out / "levels.csv", ["B_T", "state_index", "E_Hz", "Sz", "Iz"], level_rows)
    write_csv(out / "transitions.csv", ["B_T", "a", "b", "nu_Hz", "strength"], trans_rows)


def cmd_find_clocks(cfg: RunConfig, out: Path) -> None:
    model = cfg.model()
    if cfg["angular"]["enabled"]:
        _angular_mode(cfg, model, out)
        return
    scan_cfg = cfg["scan"]
    noise_cfg = cfg["noise"]
    scan = field_scan(model, np.array(scan_cfg["axis"], dtype=float),
                      (scan_cfg["b_min_mt"] * 1e-3, scan_cfg["b_max_mt"] * 1e-3),
                      scan_cfg["b_step_mt"] * 1e-3,
                      significance_threshold=scan_cfg["significance_threshold"])
    i_ref = int(np.argmin(np.abs(scan.magnitudes - noise_cfg["b_ref_mt"] * 1e-3)))
    noise_map: dict[tuple[int, int], NoiseModel] = {}
    sigma_rows = []
    for j in scan.significant_pairs():
        pair = scan.pairs[j]
        sens = TransitionSensitivity(
            field=scan.magnitudes[i_ref] * scan.axis, pair=pair,
            frequency=scan.frequencies[i_ref, j],
            gradient=scan.gradients[i_ref, j], hessian=scan.hessians[i_ref, j])
        try:
            sigma = calibrate_sigma(noise_cfg["t2_ref_s"], sens)
        except ValueError:
            continue
        noise_map[pair] = NoiseModel(sigma_b=sigma, t2_cap=noise_cfg["t2_cap_s"])
        sigma_rows.append((pair[0], pair[1], sigma))
    apply_noise(scan, noise_map)
    points = find_clock_points(scan)

    rows = []
    g_along = scan.gradient_along()
    for j in scan.significant_pairs():
        a, b = scan.pairs[j]
        for i, bmag in enumerate(scan.magnitudes):
            rows.append((bmag, a, b, scan.frequencies[i, j], scan.strengths[i, j],
                         g_along[i, j], float(np.linalg.norm(scan.gradients[i, j])),
                         float(np.linalg.norm(scan.hessians[i, j])),
                         scan.rapid_t2[i, j]))
    write_csv(out / "sensitivity.csv",
              ["B_T", "a", "b", "nu_Hz", "strength", "grad_along_Hz_per_T",
               "grad_norm_Hz_per_T", "hess_fro_Hz_per_T2", "rapid_t2_s"], rows)
    write_csv(out / "calibration.csv", ["a", "b", "sigma_b_T"], sigma_rows)
    write_csv(out / "clock_points.csv",
              ["B_T", "nu_Hz", "a", "b", "residual_grad_Hz_per_T", "hess_fro_Hz_per_T2"],
              [(p.field_magnitude, p.frequency, p.pair[0], p.pair[1],
                p.residual_gradient, p.curvature_norm) for p in points])
    write_json(out / "clock_points.json", [
        {"b_t": p.field_magnitude, "frequency_hz": p.frequency,
         "pair": list(p.pair), "residual_gradient_hz_per_t": p.residual_gradient,
         "curvature_fro_hz_per_t2": p.curvature_norm} for p in points])


def _angular_mode(cfg: RunConfig, model, out: Path) -> None:
    ang = cfg["angular"]
    noise_cfg = cfg["noise"]
    pair = tuple(ang["pair"])
    from .clockfinder import sensitivity_at
    sens_ref = sensitivity_at(model, np.array([0.0, 0.0, noise_cfg["b_ref_mt"] * 1e-3]),
                              pair)
    sigma = calibrate_sigma(noise_cfg["t2_ref_s"], sens_ref)
    noise = NoiseModel(sigma_b=sigma, t2_cap=noise_cfg["t2_cap_s"])
    dirs = fibonacci_sphere(ang["n_directions"])
    result = angular_scan(model, ang["b_mt"] * 1e-3, dirs, pair, noise)
    write_csv(out / "sphere.csv",
              ["n_x", "n_y", "n_z", "grad_norm_Hz_per_T", "hess_fro_Hz_per_T2",
               "rapid_t2_s"],
              [(d[0], d[1], d[2], g, h, t) for d, g, h, t in
               zip(result.directions, result.gradient_norm, result.curvature_norm,
                   result.rapid_t2)])
    write_json(out / "sphere_summary.json", {
        "pair": list(pair), "b_t": ang["b_mt"] * 1e-3, "sigma_b_t": sigma,
        "t2_max_s": float(result.rapid_t2.max()),
        "t2_min_s": float(result.rapid_t2.min()),
        "t2_ratio": float(result.rapid_t2.max() / result.rapid_t2.min()),
    })


def cmd_cce(cfg: RunConfig, out: Path, workers: int) -> None:
    coh = cfg["coherence"]
    seq = cfg.sequence()
    axis = np.array(cfg["scan"]["axis"], dtype=float)
    axis = axis / np.linalg.norm(axis)
    fits_rows = []
    summary = []
    fits_per_field = []
    for fi, b_mt in enumerate(coh["fields_mt"]):
        field = b_mt * 1e-3 * axis
        curves, mean, failures = _run_ensemble(cfg, field, seq, coh["bath_kind"], workers)
        field_dir = out / f"field_{fi:02d}"
        for k, curve in enumerate(curves):
            if curve is None:
                continue
            write_curve_csv(field_dir / f"curve_{k:03d}.csv", curve)
            for label, bath in _baths_for(cfg, k, field, coh["bath_kind"]).items():
                write_json(field_dir / f"bath_{label}_{k:03d}.json", bath.to_json_dict())
        write_curve_csv(field_dir / "mean_curve.csv", mean)
        write_curve_json(field_dir / "mean_curve.json", mean)
        t2_stat, n_stat, fits = ensemble_t2(
            [c for c in curves if c is not None], mean,
            mode=coh["ensemble_statistic"])
        mean_fit = fit_stretched_exponential(mean)
        for k, f in enumerate(fits):
            fits_rows.append((b_mt, k, f.t2, f.exponent_n, f.residual_rms, f.converged))
        fits_per_field.append(fits)
        summary.append({
            "field_mt": b_mt, "t2_s": t2_stat, "exponent_n": n_stat,
            "statistic": coh["ensemble_statistic"],
            "t2_fit_of_mean_s": mean_fit.t2, "n_fit_of_mean": mean_fit.exponent_n,
            "fit_of_mean_converged": mean_fit.converged,
            "n_converged": sum(f.converged for f in fits),
            "failures": [list(f) for f in failures],
        })
    write_csv(out / "fits.csv",
              ["field_mt", "config_index", "t2_s", "exponent_n", "residual_rms",
               "converged"], fits_rows)
    write_json(out / "ensemble.json", summary)
    try:
        hist = aggregate_histogram(fits_per_field, [s["field_mt"] for s in summary])
        write_json(out / "histogram.json", hist.as_dict())
    except ValueError:
        write_json(out / "histogram.json", {"error": "no converged fits"})


def cmd_sweep_tc(cfg: RunConfig, out: Path, workers: int) -> None:
    sweep = cfg["sweep"]
    seq = cfg.sequence()
    axis = np.array(cfg["scan"]["axis"], dtype=float)
    axis = axis / np.linalg.norm(axis)
    field = sweep["field_mt"] * 1e-3 * axis
    bath_kind = cfg["coherence"]["bath_kind"]
    grid_rows = []
    fits_rows = []
    fits_cells = []
    cells = []
    base = cfg.data
    for temp in sweep["temperatures_k"]:
        for conc in sweep["concentrations"]:
            cell_cfg = RunConfig(data={**base, "bath": {**base["bath"],
                                                        "temperature_k": temp,
                                                        "concentration_er": conc},
                                       "coherence": {**base["coherence"],
                                                     "pair": sweep["pair"]}})
            curves, mean, failures = _run_ensemble(cell_cfg, field, seq, bath_kind,
                                                   workers)
            t2_stat, n_stat, fits = ensemble_t2([c for c in curves if c is not None],
                                                mean, mode="mean-of-fits")
            mean_fit = fit_stretched_exponential(mean)
            no_decay = not any(f.converged for f in fits)
            flag = "no-decay-source" if (bath_kind == "electron" and conc == 0.0) else (
                "no-decay-in-window" if no_decay else "ok")
            grid_rows.append((temp, conc, t2_stat, n_stat,
                              sum(f.converged for f in fits), len(failures),
                              mean_fit.t2, mean_fit.converged, flag))
            for k, f in enumerate(fits):
                fits_rows.append((temp, conc, k, f.t2, f.exponent_n, f.converged))
            fits_cells.append(fits)
            cells.append({"temperature_k": temp, "concentration_er": conc,
                          "t2_mean_of_fits_s": t2_stat,
                          "t2_fit_of_mean_s": mean_fit.t2, "flag": flag})
    write_csv(out / "grid.csv",
              ["temperature_K", "concentration_er", "t2_mean_of_fits_s",
               "exponent_n_mean", "n_converged", "n_failed", "t2_fit_of_mean_s",
               "fit_of_mean_converged", "flag"], grid_rows)
    write_csv(out / "fits.csv",
              ["temperature_K", "concentration_er", "config_index", "t2_s",
               "exponent_n", "converged"], fits_rows)
    write_json(out / "grid.json", cells)
    try:
        hist = aggregate_histogram(fits_cells, list(range(len(fits_cells))))
        write_json(out / "histogram.json", hist.as_dict())
    except ValueError:
        write_json(out / "histogram.json", {"error": "no converged fits"})


def cmd_cpmg(cfg: RunConfig, out: Path, workers: int) -> None:
    cp = cfg["cpmg"]
    axis = np.array(cfg["scan"]["axis"], dtype=float)
    axis = axis / np.linalg.norm(axis)
    field = cp["field_mt"] * 1e-3 * axis
    bath_kind = cfg["coherence"]["bath_kind"]
    base = cfg.data
    rows = []
    eta_out = {}
    for case in cp["cases"]:
        label = case.get("label", f"T{case.get('temperature_k', 1.0)}")
        case_cfg = RunConfig(data={
            **base,
            "bath": {**base["bath"],
                     "temperature_k": case.get("temperature_k",
                                               base["bath"]["temperature_k"]),
                     "concentration_er": case.get("concentration_er",
                                                  base["bath"]["concentration_er"])},
            "coherence": {**base["coherence"], "pair": cp["pair"]}})
        t2_points = []
        for n_pulses in cp["n_pulses_list"]:
            seq = PulseSequence.cpmg(n_pulses)
            curves, mean, _ = _run_ensemble(case_cfg, field, seq, bath_kind, workers)
            fit = fit_stretched_exponential(mean)
            write_curve_csv(out / label / f"mean_curve_N{n_pulses:02d}.csv", mean)
            rows.append((label, n_pulses, fit.t2, fit.exponent_n, fit.converged))
            t2_points.append((n_pulses, fit.t2))
        scaling = fit_power_law(t2_points)
        eta_out[label] = scaling.as_dict()
    write_csv(out / "t2_vs_n.csv",
              ["case", "n_pulses", "t2_s", "exponent_n", "converged"], rows)
    write_json(out / "eta.json", eta_out)


def cmd_converge(cfg: RunConfig, out: Path, workers: int) -> None:
    conv = cfg["converge"]
    axis = np.array(cfg["scan"]["axis"], dtype=float)
    axis = axis / np.linalg.norm(axis)
    field = conv["field_mt"] * 1e-3 * axis
    seq = cfg.sequence()
    base = cfg.data

    def mean_for(order: int, r_dipole_a: float, r_bath_a: float) -> CoherenceCurve:
        variant = RunConfig(data={
            **base,
            "bath": {**base["bath"], "r_bath_a": r_bath_a},
            "cce": {**base["cce"], "order": order, "r_dipole_a": r_dipole_a},
            "coherence": {**base["coherence"], "pair": conv["pair"],
                          "bath_kind": "nuclear"}})
        _, mean, _ = _run_ensemble(variant, field, seq, "nuclear", workers)
        return mean

    deltas = {}
    base_rb = base["bath"]["r_bath_a"]

    order_curves = {}
    for order in conv["orders"]:
        mean = mean_for(order, conv["orders_r_dipole_a"], base_rb)
        order_curves[order] = mean
        write_curve_csv(out / f"order_{order}.csv", mean)
    orders = sorted(order_curves)
    deltas["order"] = [
        {"pair": [o1, o2],
         "max_abs_delta": float(np.abs(order_curves[o1].values
                                       - order_curves[o2].values).max())}
        for o1, o2 in zip(orders, orders[1:])]

    rdip_curves = {}
    for rdip in conv["r_dipole_list_a"]:
        mean = mean_for(conv["r_dipole_order"], rdip, base_rb)
        rdip_curves[rdip] = mean
        write_curve_csv(out / f"rdipole_{rdip:g}A.csv", mean)
    rdips = sorted(rdip_curves)
    deltas["r_dipole"] = [
        {"pair": [r1, r2],
         "max_abs_delta": float(np.abs(rdip_curves[r1].values
                                       - rdip_curves[r2].values).max())}
        for r1, r2 in zip(rdips, rdips[1:])]

    rb_curves = {}
    for rb in conv["r_bath_list_a"]:
        mean = mean_for(conv["r_bath_order"], base["cce"]["r_dipole_a"], rb)
        rb_curves[rb] = mean
        write_curve_csv(out / f"rbath_{rb:g}A.csv", mean)
    rbs = sorted(rb_curves)
    deltas["r_bath"] = [
        {"pair": [r1, r2],
         "max_abs_delta": float(np.abs(rb_curves[r1].values
                                       - rb_curves[r2].values).max())}
        for r1, r2 in zip(rbs, rbs[1:])]

    write_json(out / "deltas.json", deltas)


def cmd_fit(cfg: RunConfig, out: Path, inputs: list[str]) -> None:
    from .io import read_curve_csv
    rows = []
    results = []
    for p in inputs:
        curve = read_curve_csv(Path(p))
        fit = fit_stretched_exponential(curve)
        rows.append((p, fit.t2, fit.exponent_n, fit.residual_rms, fit.converged))
        results.append({"input": p, **fit.as_dict()})
    write_csv(out / "fits.csv",
              ["input", "t2_s", "exponent_n", "residual_rms", "converged"], rows)
    write_json(out / "fits.json", results)


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clockbath", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("levels", "find-clocks", "cce", "sweep-tc", "cpmg", "converge", "fit"):
        p = sub.add_parser(name)
        p.add_argument("--config", type=str, default=None, help="YAML config file")
        p.add_argument("--out", type=str, default=None, help="output directory")
        p.add_argument("--workers", type=int, default=None, help="worker processes")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--preset", type=str, default=None, choices=["desk", "paper"])
        if name == "fit":
            p.add_argument("--in", dest="inputs", nargs="+", required=True,
                           help="curve CSV files to fit")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = {}
        if args.seed is not None:
            overrides = {"run": {"master_seed": args.seed}}
        cfg = RunConfig.load(args.config, preset=args.preset, overrides=overrides)
        out = args.out or os.environ.get("CLOCKBATH_OUT") or cfg["output"]["directory"]
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        workers = args.workers or int(os.environ.get("CLOCKBATH_WORKERS", "0")) \
            or cfg["run"]["workers"]
        _write_meta(cfg, out, args.command)
        if args.command == "levels":
            cmd_levels(cfg, out)
        elif args.command == "find-clocks":
            cmd_find_clocks(cfg, out)
        elif args.command == "cce":
            cmd_cce(cfg, out, workers)
        elif args.command == "sweep-tc":
            cmd_sweep_tc(cfg, out, workers)
        elif args.command == "cpmg":
            cmd_cpmg(cfg, out, workers)
        elif args.command == "converge":
            cmd_converge(cfg, out, workers)
        elif args.command == "fit":
            cmd_fit(cfg, out, args.inputs)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CapacityError, ClusterBudgetError, DimensionBudgetError) as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (ValueError, RuntimeError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    raise SystemExit(main())
