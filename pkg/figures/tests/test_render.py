"""Rendering tests over schema-exact synthetic artifacts.

The fixtures reproduce the primary package's CSV/JSON contracts; the
renderer never invokes the simulation engine.
"""

import json
import math
from pathlib import Path

import numpy as np
import pytest

from clockbath_figures.cli import main
from clockbath_figures.render import FigureSpec, SchemaError, render


def _write(path: Path, header, rows):
    lines = [",".join(header)]
    lines += [",".join(str(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def artifacts(tmp_path):
    rng = np.random.default_rng(3)
    files = {}

    rows = []
    for b in np.linspace(1e-3, 50e-3, 40):
        for s in range(16):
            rows.append((b, s, (s - 7.5) * 1e8 + 5e9 * b * (s % 2),
                         (s % 2) - 0.5, (s % 8) - 3.5))
    files["levels"] = _write(tmp_path / "levels.csv",
                             ["B_T", "state_index", "E_Hz", "Sz", "Iz"], rows)

    rows = []
    for b in np.linspace(1e-3, 50e-3, 60):
        rows.append((b, 5, 8, 2.1e9 + 1e10 * (b - 0.0185) ** 2, 0.06,
                     2e12 * (b - 0.0185), abs(2e12 * (b - 0.0185)) + 1e3,
                     2e12, min(1.0 / (abs(2e12 * (b - 0.0185)) * 1e-9 + 1e-3), 10.0)))
    files["sensitivity"] = _write(
        tmp_path / "sensitivity.csv",
        ["B_T", "a", "b", "nu_Hz", "strength", "grad_along_Hz_per_T",
         "grad_norm_Hz_per_T", "hess_fro_Hz_per_T2", "rapid_t2_s"], rows)

    t = np.geomspace(1e-5, 1.0, 30)
    for i, t2 in enumerate((0.01, 0.05)):
        vals = np.exp(-((t / t2) ** 2))
        files[f"decay{i}"] = _write(tmp_path / f"curve_{i}.csv",
                                    ["t_seconds", "re_L", "im_L"],
                                    zip(t, vals, np.zeros_like(t)))

    files["histogram"] = tmp_path / "histogram.json"
    files["histogram"].write_text(json.dumps({
        "axis_values": [2.65, 3.65, 4.65],
        "bin_edges_s": list(np.geomspace(1e-4, 1.0, 41)),
        "counts": rng.integers(0, 20, size=(3, 40)).tolist(),
        "mean_t2_s": [0.002, 0.09, 0.002],
        "n_failed": [0, 0, 0],
    }))

    rows = []
    for temp in (0.01, 10.0):
        for conc in (1e-8, 1e-4):
            rows.append((temp, conc, 0.04 / (1 + 1000 * conc * temp), 2.0,
                         20, 0, 0.04, True, "ok"))
    files["tc-grid"] = _write(
        tmp_path / "grid.csv",
        ["temperature_K", "concentration_er", "t2_mean_of_fits_s",
         "exponent_n_mean", "n_converged", "n_failed", "t2_fit_of_mean_s",
         "fit_of_mean_converged", "flag"], rows)

    rows = []
    for case in ("polarized-10mK", "weak-2K"):
        eta = 0.55 if case.startswith("pol") else 0.35
        for n in (1, 2, 4, 8):
            rows.append((case, n, 0.3 * n ** eta, 1.9, True))
    files["cpmg"] = _write(tmp_path / "t2_vs_n.csv",
                           ["case", "n_pulses", "t2_s", "exponent_n", "converged"],
                           rows)

    phi = np.linspace(0, 2 * math.pi, 64, endpoint=False)
    z = np.linspace(-0.99, 0.99, 64)
    r = np.sqrt(1 - z ** 2)
    rows = [(rr * math.cos(p), rr * math.sin(p), zz, 1e5, 2e12, 9.99)
            for p, zz, rr in zip(phi, z, r)]
    files["sphere"] = _write(
        tmp_path / "sphere.csv",
        ["n_x", "n_y", "n_z", "grad_norm_Hz_per_T", "hess_fro_Hz_per_T2",
         "rapid_t2_s"], rows)
    return files


KIND_INPUTS = {
    "levels": ["levels"],
    "sensitivity": ["sensitivity"],
    "decay": ["decay0", "decay1"],
    "histogram": ["histogram"],
    "tc-grid": ["tc-grid"],
    "cpmg": ["cpmg"],
    "sphere": ["sphere"],
}


@pytest.mark.parametrize("kind", sorted(KIND_INPUTS))
def test_render_every_kind(kind, artifacts, tmp_path):
    inputs = [str(artifacts[k]) for k in KIND_INPUTS[kind]]
    out = tmp_path / f"{kind}.png"
    path = render(FigureSpec(kind=kind, inputs=inputs, output=str(out)))
    assert Path(path).exists()
    assert Path(path).stat().st_size > 2000


def test_render_is_deterministic_for_fixed_inputs(artifacts, tmp_path):
    outs = []
    for name in ("a.png", "b.png"):
        out = tmp_path / name
        render(FigureSpec(kind="decay", inputs=[str(artifacts["decay0"])],
                          output=str(out)))
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_schema_violation_names_missing_columns(tmp_path):
    bad = _write(tmp_path / "bad.csv", ["B_T", "state_index", "E_Hz"],
                 [(0.001, 0, 1e9)])
    with pytest.raises(SchemaError) as err:
        render(FigureSpec(kind="levels", inputs=[str(bad)],
                          output=str(tmp_path / "x.png")))
    assert "Sz" in str(err.value) and "Iz" in str(err.value)


def test_histogram_schema_violation_names_keys(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"axis_values": [1.0]}))
    with pytest.raises(SchemaError) as err:
        render(FigureSpec(kind="histogram", inputs=[str(bad)],
                          output=str(tmp_path / "x.png")))
    assert "bin_edges_s" in str(err.value)


def test_unknown_kind_rejected(tmp_path):
    with pytest.raises(ValueError):
        FigureSpec(kind="pie", inputs=["x.csv"], output="y.png")


def test_cli_render_and_schema_exit_codes(artifacts, tmp_path):
    out = tmp_path / "cli_levels.png"
    assert main(["--kind", "levels", "--in", str(artifacts["levels"]),
                 "--out", str(out)]) == 0
    assert out.exists()
    bad = _write(tmp_path / "bad.csv", ["B_T"], [(0.001,)])
    assert main(["--kind", "levels", "--in", str(bad),
                 "--out", str(tmp_path / "no.png")]) == 2


def test_cli_style_file(artifacts, tmp_path):
    style = tmp_path / "style.yaml"
    style.write_text("color_by: Iz\ncmap: plasma\ndpi: 72\n")
    out = tmp_path / "styled.png"
    assert main(["--kind", "levels", "--in", str(artifacts["levels"]),
                 "--out", str(out), "--style", str(style)]) == 0
    assert out.exists()
