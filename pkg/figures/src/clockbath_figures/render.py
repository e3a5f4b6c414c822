"""Render publication-style panels from clockbath CSV/JSON artifacts.

Rendering is read-only over the input files: the only processing applied
is axis transforms (log scales) and column selection.  Every figure kind
validates the input header against its CSV contract and refuses inputs
with missing columns, naming them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dfield
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


class SchemaError(ValueError):
    """Input artifact does not satisfy the expected column contract."""


REQUIRED_COLUMNS = {
    "levels": ["B_T", "state_index", "E_Hz", "Sz", "Iz"],
    "sensitivity": ["B_T", "a", "b", "nu_Hz", "strength", "grad_along_Hz_per_T",
                    "grad_norm_Hz_per_T", "hess_fro_Hz_per_T2", "rapid_t2_s"],
    "decay": ["t_seconds", "re_L", "im_L"],
    "tc-grid": ["temperature_K", "concentration_er", "t2_mean_of_fits_s"],
    "cpmg": ["case", "n_pulses", "t2_s"],
    "sphere": ["n_x", "n_y", "n_z", "grad_norm_Hz_per_T", "hess_fro_Hz_per_T2",
               "rapid_t2_s"],
}

FIGURE_KINDS = tuple(list(REQUIRED_COLUMNS) + ["histogram"])


@dataclass
class FigureSpec:
    kind: str
    inputs: list[str]
    output: str
    style: dict = dfield(default_factory=dict)

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; "
                             f"choose from {sorted(FIGURE_KINDS)}")
        if not self.inputs:
            raise ValueError("at least one input artifact is required")


def _read_table(path: str, kind: str) -> dict[str, np.ndarray]:
    lines = Path(path).read_text().strip().splitlines()
    header = [h.strip() for h in lines[0].split(",")]
    missing = [c for c in REQUIRED_COLUMNS[kind] if c not in header]
    if missing:
        raise SchemaError(
            f"{path}: missing required column(s) {', '.join(missing)} "
            f"for kind {kind!r} (found: {', '.join(header)})")
    columns: dict[str, list] = {h: [] for h in header}
    for line in lines[1:]:
        for h, cell in zip(header, line.split(",")):
            columns[h].append(cell)
    out = {}
    for h, cells in columns.items():
        try:
            out[h] = np.array([float(c) for c in cells])
        except ValueError:
            out[h] = np.array(cells)
    return out


def _style(spec: FigureSpec, key: str, default):
    return spec.style.get(key, default)


def render(spec: FigureSpec) -> str:
    """Render one figure and return the output path."""
    fig = _RENDERERS[spec.kind](spec)
    out = Path(spec.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=int(_style(spec, "dpi", 150)),
                bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)
    return str(out)


def _render_levels(spec: FigureSpec):
    data = _read_table(spec.inputs[0], "levels")
    color_by = _style(spec, "color_by", "Sz")
    if color_by not in ("Sz", "Iz"):
        raise SchemaError(f"levels color_by must be Sz or Iz, got {color_by!r}")
    fig, ax = plt.subplots(figsize=(5.5, 4))
    states = np.unique(data["state_index"]).astype(int)
    vals = data[color_by]
    norm = plt.Normalize(vals.min(), vals.max())
    cmap = plt.get_cmap(_style(spec, "cmap", "coolwarm"))
    for s in states:
        mask = data["state_index"] == s
        b = data["B_T"][mask] * 1e3
        e = data["E_Hz"][mask] / 1e9
        c = vals[mask]
        ax.scatter(b, e, c=cmap(norm(c)), s=1.5, rasterized=True)
    sm = plt.cm.ScalarMappable(norm=norm, cmap=cmap)
    fig.colorbar(sm, ax=ax, label=rf"$\langle {color_by[0]}_z\rangle$")
    ax.set_xlabel(r"$B_0$ (mT)")
    ax.set_ylabel("E (GHz)")
    ax.set_title(_style(spec, "title", "central-spin levels"))
    return fig


def _render_sensitivity(spec: FigureSpec):
    data = _read_table(spec.inputs[0], "sensitivity")
    color_col = _style(spec, "color_by", "rapid_t2_s")
    if color_col not in data:
        raise SchemaError(f"sensitivity color_by column {color_col!r} not present")
    fig, ax = plt.subplots(figsize=(5.5, 4))
    vals = np.abs(data[color_col])
    finite = np.isfinite(vals) & (vals > 0)
    log_color = _style(spec, "log_color", True)
    cvals = np.log10(vals[finite]) if log_color else vals[finite]
    sc = ax.scatter(data["B_T"][finite] * 1e3, data["nu_Hz"][finite] / 1e9,
                    c=cvals, s=2.0, cmap=_style(spec, "cmap", "viridis"),
                    rasterized=True)
    label = f"log10 {color_col}" if log_color else color_col
    fig.colorbar(sc, ax=ax, label=label)
    ax.set_xlabel(r"$B_0$ (mT)")
    ax.set_ylabel(r"$\nu$ (GHz)")
    ax.set_title(_style(spec, "title", "transition sensitivity"))
    return fig


def _render_decay(spec: FigureSpec):
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for path in spec.inputs:
        data = _read_table(path, "decay")
        mag = np.hypot(data["re_L"], data["im_L"])
        ax.plot(data["t_seconds"], mag, lw=1.2, label=Path(path).stem)
    ax.set_xscale("log")
    ax.set_xlabel("t (s)")
    ax.set_ylabel("|L(t)|")
    ax.set_ylim(-0.02, 1.05)
    if len(spec.inputs) <= 12:
        ax.legend(fontsize=7)
    ax.set_title(_style(spec, "title", "coherence decay"))
    return fig


def _render_histogram(spec: FigureSpec):
    path = spec.inputs[0]
    data = json.loads(Path(path).read_text())
    required = ["axis_values", "bin_edges_s", "counts", "mean_t2_s"]
    missing = [k for k in required if k not in data]
    if missing:
        raise SchemaError(f"{path}: missing required key(s) {', '.join(missing)} "
                          "for kind 'histogram'")
    counts = np.array(data["counts"], dtype=float)
    axis = np.array(data["axis_values"], dtype=float)
    edges = np.array(data["bin_edges_s"], dtype=float)
    fig, ax = plt.subplots(figsize=(5.5, 4))
    x = np.arange(len(axis) + 1)
    mesh = ax.pcolormesh(x, edges, counts.T,
                         cmap=_style(spec, "cmap", "magma"), shading="auto")
    ax.set_yscale("log")
    means = [m for m in data["mean_t2_s"]]
    for i, m in enumerate(means):
        if m is not None:
            ax.plot(i + 0.5, m, "o", mfc="none", mec="cyan", ms=8)
    ax.set_xticks(np.arange(len(axis)) + 0.5)
    ax.set_xticklabels([f"{v:g}" for v in axis], rotation=45, fontsize=7)
    fig.colorbar(mesh, ax=ax, label="configurations")
    ax.set_xlabel(_style(spec, "xlabel", "scan value"))
    ax.set_ylabel(r"$T_2$ (s)")
    ax.set_title(_style(spec, "title", "T2 distribution"))
    return fig


def _render_tc_grid(spec: FigureSpec):
    data = _read_table(spec.inputs[0], "tc-grid")
    temps = np.unique(data["temperature_K"])
    concs = np.unique(data["concentration_er"])
    grid = np.full((len(temps), len(concs)), np.nan)
    for t, c, v in zip(data["temperature_K"], data["concentration_er"],
                       data["t2_mean_of_fits_s"]):
        grid[np.searchsorted(temps, t), np.searchsorted(concs, c)] = v
    fig, ax = plt.subplots(figsize=(5.0, 4))
    with np.errstate(divide="ignore", invalid="ignore"):
        mesh = ax.pcolormesh(np.arange(len(concs) + 1), np.arange(len(temps) + 1),
                             np.log10(grid), cmap=_style(spec, "cmap", "viridis"),
                             shading="auto")
    ax.set_xticks(np.arange(len(concs)) + 0.5)
    ax.set_xticklabels([f"{c:g}" for c in concs], rotation=45, fontsize=7)
    ax.set_yticks(np.arange(len(temps)) + 0.5)
    ax.set_yticklabels([f"{t:g}" for t in temps], fontsize=7)
    fig.colorbar(mesh, ax=ax, label=r"log10 $T_2$ (s)")
    ax.set_xlabel("dopant concentration")
    ax.set_ylabel("temperature (K)")
    ax.set_title(_style(spec, "title", "Hahn T2 vs temperature and concentration"))
    return fig


def _render_cpmg(spec: FigureSpec):
    data = _read_table(spec.inputs[0], "cpmg")
    fig, ax = plt.subplots(figsize=(5.0, 4))
    for case in sorted(set(data["case"].tolist())):
        mask = data["case"] == case
        n = data["n_pulses"][mask].astype(float)
        t2 = data["t2_s"][mask]
        order = np.argsort(n)
        ax.plot(n[order], t2[order], "o-", label=str(case))
        if len(n) >= 3:
            slope, intercept = np.polyfit(np.log(n), np.log(t2), 1)
            ax.plot(n[order], np.exp(intercept) * n[order] ** slope, "--",
                    lw=0.8, color="gray")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("number of pi pulses N")
    ax.set_ylabel(r"$T_2$ (s)")
    ax.legend(fontsize=8)
    ax.set_title(_style(spec, "title", "CPMG scaling"))
    return fig


def _render_sphere(spec: FigureSpec):
    data = _read_table(spec.inputs[0], "sphere")
    color_col = _style(spec, "color_by", "rapid_t2_s")
    if color_col not in data:
        raise SchemaError(f"sphere color_by column {color_col!r} not present")
    fig = plt.figure(figsize=(5.0, 4.5))
    ax = fig.add_subplot(projection="3d")
    sc = ax.scatter(data["n_x"], data["n_y"], data["n_z"], c=data[color_col],
                    cmap=_style(spec, "cmap", "viridis"), s=18)
    fig.colorbar(sc, ax=ax, shrink=0.7, label=color_col)
    for axis_name, vec in (("$B_x$", (1.35, 0, 0)), ("$B_y$", (0, 1.35, 0)),
                           ("$B_z$", (0, 0, 1.35))):
        ax.quiver(0, 0, 0, *vec, color="k", lw=0.8, arrow_length_ratio=0.08)
        ax.text(*[1.12 * v for v in vec], axis_name, fontsize=8)
    ax.set_box_aspect((1, 1, 1))
    ax.set_axis_off()
    ax.set_title(_style(spec, "title", "angular map"))
    return fig


_RENDERERS = {
    "levels": _render_levels,
    "sensitivity": _render_sensitivity,
    "decay": _render_decay,
    "histogram": _render_histogram,
    "tc-grid": _render_tc_grid,
    "cpmg": _render_cpmg,
    "sphere": _render_sphere,
}
