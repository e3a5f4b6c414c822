"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest -s tests/test_acceptance.py` to see the per-criterion
summary.  Desk-scale ensemble parameters are deliberately reduced from the
publication-scale defaults; tolerances are pinned in the assertions.
"""

import filecmp
import json
import time
from pathlib import Path

import numpy as np
import pytest
import yaml

from clockbath.cce import (
    CCEConfig,
    PulseSequence,
    cce_coherence,
    exact_reference,
    log_time_grid,
)
from clockbath.clockfinder import NoiseModel, calibrate_sigma, rapid_t2, sensitivity_at
from clockbath.cli import main
from clockbath.constants import ANGSTROM
from clockbath.lattice import BATH_ELECTRON, BathConfiguration, BathSpin, O17
from clockbath.spincore import CentralSpinModel, eigensystem_at

A_HZ = 687e6


def _report(name: str, ok: bool, detail: str) -> None:
    print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")


def _run_cli(args, tmp, name, config=None) -> Path:
    out = Path(tmp) / name
    argv = list(args) + ["--out", str(out)]
    if config is not None:
        cfg_path = Path(tmp) / f"{name}.yaml"
        cfg_path.write_text(yaml.safe_dump(config))
        argv += ["--config", str(cfg_path)]
    code = main(argv)
    assert code == 0, f"command {args} exited with {code}"
    return out


def test_criterion_1_zero_field_hyperfine_structure():
    t0 = time.perf_counter()
    es = eigensystem_at(CentralSpinModel(), [0.0, 0.0, 0.0])
    rounded = np.round(es.energies / A_HZ, 6)
    levels, counts = np.unique(rounded, return_counts=True)
    splitting = es.energies[7] - es.energies[6]
    elapsed = time.perf_counter() - t0
    ok = (len(levels) == 2
          and counts.tolist() == [7, 9]
          and abs(splitting - 4 * A_HZ) < 1e-6 * 4 * A_HZ
          and abs(splitting - 2.748e9) < 1e-3 * 2.748e9
          and elapsed < 1.0)
    _report("C1 zero-field hyperfine structure", ok,
            f"levels {levels.tolist()} x {counts.tolist()}, "
            f"splitting {splitting / 1e9:.6f} GHz, {elapsed:.3f} s")
    assert ok


def test_criterion_2_clock_point_reproduction(tmp_path):
    t0 = time.perf_counter()
    out = _run_cli(["find-clocks"], tmp_path, "clocks")
    elapsed = time.perf_counter() - t0
    points = json.loads((out / "clock_points.json").read_text())
    expected = [(3.6e-3, 2.71e9), (10.9e-3, 2.53e9), (18.5e-3, 2.11e9)]
    found = sorted((p["b_t"], p["frequency_hz"]) for p in points)
    ok = len(found) == 3 and elapsed < 60.0
    detail = []
    for (b_ref, nu_ref), (b, nu) in zip(expected, found):
        ok = ok and abs(b - b_ref) < 0.2e-3 and abs(nu - nu_ref) < 20e6
        detail.append(f"({b * 1e3:.2f} mT, {nu / 1e9:.3f} GHz)")
    _report("C2 clock-point reproduction", ok,
            f"{'; '.join(detail)}; {elapsed:.1f} s")
    assert ok


def test_criterion_3_sigma_calibration_self_consistency():
    t0 = time.perf_counter()
    model = CentralSpinModel()
    sens = sensitivity_at(model, [0.0, 0.0, 25e-3], (6, 9))
    sigma = calibrate_sigma(0.039, sens)
    back = rapid_t2(sens, NoiseModel(sigma_b=sigma, t2_cap=1e9))
    elapsed = time.perf_counter() - t0
    ok = (abs(back - 0.039) < 1e-6 * 0.039
          and 0.93e-9 / 2 < sigma < 0.93e-9 * 2
          and elapsed < 1.0)
    _report("C3 sigma_B calibration", ok,
            f"sigma_B = {sigma * 1e9:.3f} nT, round-trip T2 = {back * 1e3:.6f} ms, "
            f"{elapsed:.2f} s")
    assert ok


def test_criterion_4_oracle_equivalence():
    t0 = time.perf_counter()
    model = CentralSpinModel()
    rng = np.random.default_rng(2718)
    worst = 0.0
    n_baths = 20
    for trial in range(n_baths):
        n_spins = int(rng.integers(1, 5))
        n_o = int(min(rng.integers(0, n_spins + 1), 2))
        species = [O17] * n_o + [BATH_ELECTRON] * (n_spins - n_o)
        rng.shuffle(species)
        spins = []
        for sp in species:
            u = rng.normal(size=3)
            u /= np.linalg.norm(u)
            r = rng.uniform(6, 60) * ANGSTROM
            m = float(rng.choice(sp.projections()))
            spins.append(BathSpin(position=u * r, species=sp, projection=m))
        bz = rng.uniform(3e-3, 30e-3)
        bath = BathConfiguration(spins=spins, seed=trial, temperature=0.1,
                                 field=np.array([0.0, 0.0, bz]),
                                 concentration=0.0, r_bath=1e-7)
        times = log_time_grid(rng.uniform(1e-3, 5e-3), 14)
        state = "mixed" if trial % 2 else "sampled"
        cce = CCEConfig(order=n_spins, r_bath=1e-6, r_dipole=1e-6,
                        time_grid=times, bath_state=state, dim_budget=30000)
        seq = PulseSequence.hahn() if trial % 3 else PulseSequence.ramsey()
        approx = cce_coherence(bath, model, (5, 10), seq, cce)
        exact = exact_reference(bath, model, (5, 10), seq, times, bath_state=state)
        worst = max(worst, float(np.abs(approx.values - exact.values).max()))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-6 and elapsed < 300.0
    _report("C4 oracle equivalence", ok,
            f"{n_baths} baths, max deviation {worst:.2e}, {elapsed:.0f} s")
    assert ok


def test_criterion_5_convergence_desk_scale(tmp_path):
    t0 = time.perf_counter()
    config = {
        "bath": {"r_bath_a": 80.0},
        "cce": {"order": 2, "two_level": True, "bath_state": "sampled",
                "time_max_s": 2.0, "time_min_s": 1e-4, "time_points": 32},
        "sequence": {"kind": "hahn", "n_pulses": 1},
        "run": {"n_configs": 10, "master_seed": 424242, "workers": 2},
        "converge": {"field_mt": 25.0, "pair": [6, 9],
                     "orders": [1, 2, 3, 4], "orders_r_dipole_a": 25.0,
                     "r_dipole_list_a": [30.0, 40.0, 50.0], "r_dipole_order": 3,
                     "r_bath_list_a": [60.0, 80.0], "r_bath_order": 2},
    }
    out = _run_cli(["converge"], tmp_path, "converge", config)
    elapsed = time.perf_counter() - t0
    deltas = json.loads((out / "deltas.json").read_text())
    d34 = next(d["max_abs_delta"] for d in deltas["order"] if d["pair"] == [3, 4])
    d4050 = next(d["max_abs_delta"] for d in deltas["r_dipole"]
                 if d["pair"] == [40.0, 50.0])
    ok = d34 < 0.02 and d4050 < 0.02 and elapsed < 1800.0
    _report("C5 convergence (desk scale)", ok,
            f"order 3 vs 4: {d34:.4f}; r_dipole 40 vs 50 A: {d4050:.4f}; "
            f"{elapsed:.0f} s")
    assert ok


def test_criterion_6_clock_field_coherence_enhancement(tmp_path):
    # Ramsey enhancement at the transition-3 clock field
    config = {
        "bath": {"r_bath_a": 80.0},
        "cce": {"order": 1, "two_level": False, "bath_state": "mixed",
                "time_max_s": 0.3, "time_min_s": 1e-5, "time_points": 48},
        "sequence": {"kind": "ramsey", "n_pulses": 0},
        "coherence": {"fields_mt": [2.65, 3.65, 4.65], "pair": [4, 11],
                      "bath_kind": "nuclear",
                      "ensemble_statistic": "mean-of-fits"},
        "run": {"n_configs": 20, "master_seed": 612},
    }
    out = _run_cli(["cce"], tmp_path, "ramsey", config)
    summary = json.loads((out / "ensemble.json").read_text())
    t2_by_field = {s["field_mt"]: s["t2_s"] for s in summary}
    n_clock = next(s["exponent_n"] for s in summary if s["field_mt"] == 3.65)
    ratio_lo = t2_by_field[3.65] / t2_by_field[2.65]
    ratio_hi = t2_by_field[3.65] / t2_by_field[4.65]
    ok_ramsey = ratio_lo >= 5.0 and ratio_hi >= 5.0 and 1.8 <= n_clock <= 2.8

    # trend check on the 2x2 temperature/concentration corner grid
    config_tc = {
        "bath": {"r_bath_a": 200.0, "electron_target_count": 30.0},
        "cce": {"order": 2, "two_level": True, "bath_state": "sampled",
                "electron_order": 4, "time_max_s": 5.0, "time_min_s": 1e-4,
                "time_points": 40},
        "sequence": {"kind": "hahn", "n_pulses": 1},
        "coherence": {"bath_kind": "combined"},
        "sweep": {"temperatures_k": [0.01, 10.0],
                  "concentrations": [1.0e-8, 1.0e-4],
                  "field_mt": 25.0, "pair": [6, 9]},
        "run": {"n_configs": 20, "master_seed": 902},
    }
    out_tc = _run_cli(["sweep-tc"], tmp_path, "sweep", config_tc)
    cells = json.loads((out_tc / "grid.json").read_text())
    t2 = {(c["temperature_k"], c["concentration_er"]): c["t2_mean_of_fits_s"]
          for c in cells}
    slack = 1.02  # fit noise tolerance on ties
    ok_trend = (
        t2[(0.01, 1e-4)] <= t2[(0.01, 1e-8)] * slack
        and t2[(10.0, 1e-4)] <= t2[(10.0, 1e-8)] * slack
        and t2[(10.0, 1e-8)] <= t2[(0.01, 1e-8)] * slack
        and t2[(10.0, 1e-4)] <= t2[(0.01, 1e-4)] * slack)
    ok = ok_ramsey and ok_trend
    _report("C6 clock-field coherence enhancement", ok,
            f"T2* clock/detuned = {ratio_lo:.1f}x, {ratio_hi:.1f}x; "
            f"n = {n_clock:.2f}; corner T2 (s) = "
            + ", ".join(f"{k}: {v:.3f}" for k, v in sorted(t2.items())))
    assert ok


def test_criterion_7_cpmg_scaling(tmp_path):
    config = {
        "bath": {"r_bath_a": 200.0, "electron_target_count": 30.0},
        "cce": {"order": 2, "two_level": True, "bath_state": "sampled",
                "electron_order": 4, "time_max_s": 120.0, "time_min_s": 1e-4,
                "time_points": 44},
        "coherence": {"bath_kind": "combined"},
        "cpmg": {"n_pulses_list": [1, 2, 4, 8], "field_mt": 19.0,
                 "pair": [6, 9],
                 "cases": [
                     {"label": "polarized-10mK", "temperature_k": 0.01,
                      "concentration_er": 1.0e-5},
                     {"label": "weak-2K", "temperature_k": 2.0,
                      "concentration_er": 1.0e-5},
                 ]},
        "run": {"n_configs": 8, "master_seed": 1905},
    }
    out = _run_cli(["cpmg"], tmp_path, "cpmg", config)
    eta = json.loads((out / "eta.json").read_text())
    eta_pol = eta["polarized-10mK"]["eta"]
    eta_weak = eta["weak-2K"]["eta"]
    ok = 0.35 <= eta_pol <= 0.65 and eta_weak < eta_pol
    _report("C7 CPMG scaling", ok,
            f"eta(polarized) = {eta_pol:.3f}, eta(weak 2K) = {eta_weak:.3f}")
    assert ok


def test_criterion_8_isotropy(tmp_path):
    t0 = time.perf_counter()
    config = {
        "angular": {"enabled": True, "n_directions": 326, "b_mt": 18.5,
                    "pair": [6, 9]},
    }
    out = _run_cli(["find-clocks"], tmp_path, "angular", config)
    elapsed = time.perf_counter() - t0
    summary = json.loads((out / "sphere_summary.json").read_text())
    ratio = summary["t2_ratio"]
    ok = ratio < 1 + 1e-4 and summary["t2_max_s"] > 0 and elapsed < 60.0
    _report("C8 isotropy", ok,
            f"326 directions, max/min rapid-T2 ratio = {ratio:.8f}, "
            f"{elapsed:.0f} s")
    assert ok


def test_criterion_9_determinism(tmp_path):
    checked = 0
    mismatches = []

    def compare(dir_a: Path, dir_b: Path):
        nonlocal checked
        files_a = sorted(p.relative_to(dir_a) for p in dir_a.rglob("*") if p.is_file())
        files_b = sorted(p.relative_to(dir_b) for p in dir_b.rglob("*") if p.is_file())
        assert files_a == files_b
        for rel in files_a:
            checked += 1
            if not filecmp.cmp(dir_a / rel, dir_b / rel, shallow=False):
                mismatches.append(str(rel))

    levels_cfg = {"scan": {"b_min_mt": 2.0, "b_max_mt": 6.0, "b_step_mt": 0.5}}
    compare(_run_cli(["levels"], tmp_path, "lv1", levels_cfg),
            _run_cli(["levels"], tmp_path, "lv2", levels_cfg))

    clocks_cfg = {"scan": {"b_min_mt": 17.0, "b_max_mt": 20.0, "b_step_mt": 0.1}}
    compare(_run_cli(["find-clocks"], tmp_path, "fc1", clocks_cfg),
            _run_cli(["find-clocks"], tmp_path, "fc2", clocks_cfg))

    cce_cfg = {
        "bath": {"r_bath_a": 60.0},
        "cce": {"order": 2, "two_level": True, "time_max_s": 0.5,
                "time_points": 12},
        "coherence": {"fields_mt": [25.0], "pair": [6, 9],
                      "bath_kind": "nuclear"},
        "run": {"n_configs": 3, "master_seed": 7},
    }
    compare(_run_cli(["cce"], tmp_path, "cc1", cce_cfg),
            _run_cli(["cce"], tmp_path, "cc2", cce_cfg))

    ok = not mismatches and checked > 10
    _report("C9 determinism", ok,
            f"{checked} artifacts byte-compared across reruns"
            + (f"; mismatches: {mismatches}" if mismatches else ""))
    assert ok
