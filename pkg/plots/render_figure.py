#!/usr/bin/env python3
"""Render phonon-herald CSV tables to publication-style figure images.

Strictly a consumer of the CLI's CSV contract: tables are read, their
embedded ``# figure = <id>`` metadata is checked against ``--figure``,
and every plotted curve comes from table columns. Nothing is recomputed
here - the one "analytic" element, the dashed exchange-oscillation
overlay on Fig3c, is drawn from the table's ``rabi_freq_pred_rad_s``
column.

Usage:
    render_figure.py --csv <path> [--csv <path> ...] --figure <id> --out <img>
    render_figure.py --csv <path> --figure Fig3c --self-test [--out <img>]

Exit codes: 0 ok, 1 self-test failure, 2 bad usage / id mismatch /
schema mismatch.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402


class RenderError(Exception):
    """Anything that should abort with exit code 2."""


@dataclass(frozen=True)
class Table:
    """One parsed CSV: metadata dict + named float columns."""

    path: Path
    meta: dict[str, str]
    columns: dict[str, np.ndarray]

    @property
    def figure_id(self) -> str:
        return self.meta.get("figure", "<missing>")

    def col(self, name: str) -> np.ndarray:
        try:
            return self.columns[name]
        except KeyError:
            raise RenderError(
                f"{self.path}: missing column {name!r} "
                f"(have {sorted(self.columns)})"
            ) from None


@dataclass(frozen=True)
class FigureSpec:
    """What to draw: validated tables + figure id + output path."""

    figure_id: str
    tables: tuple[Table, ...]
    out: Path | None

    def merged(self, name: str) -> np.ndarray:
        return np.concatenate([t.col(name) for t in self.tables])


def load_table(path: Path) -> Table:
    if not path.is_file():
        raise RenderError(f"no such CSV: {path}")
    meta: dict[str, str] = {}
    rows: list[list[str]] = []
    with path.open(newline="") as fh:
        for record in csv.reader(fh):
            if not record:
                continue
            if record[0].lstrip().startswith("#"):
                # metadata line: "# key = value" (value may contain '=')
                text = ",".join(record).lstrip().lstrip("#").strip()
                key, sep, value = text.partition("=")
                if sep:
                    meta[key.strip()] = value.strip()
                continue
            rows.append(record)
    if len(rows) < 2:
        raise RenderError(f"{path}: no data rows")
    header = [h.strip() for h in rows[0]]
    try:
        data = np.array([[float(cell) for cell in row] for row in rows[1:]])
    except ValueError as exc:
        raise RenderError(f"{path}: non-numeric cell: {exc}") from None
    if data.shape[1] != len(header):
        raise RenderError(f"{path}: ragged rows")
    return Table(path, meta, {h: data[:, i] for i, h in enumerate(header)})


def build_spec(figure_id: str, csv_paths: list[str], out: str | None) -> FigureSpec:
    tables = tuple(load_table(Path(p)) for p in csv_paths)
    for t in tables:
        if t.figure_id != figure_id:
            raise RenderError(
                f"{t.path}: figure id mismatch: table carries "
                f"{t.figure_id!r}, requested {figure_id!r}"
            )
    first = sorted(tables[0].columns)
    for t in tables[1:]:
        if sorted(t.columns) != first:
            raise RenderError(
                f"{t.path}: schema differs from {tables[0].path} "
                f"({sorted(t.columns)} vs {first})"
            )
    return FigureSpec(figure_id, tables, Path(out) if out else None)


# ---------------------------------------------------------------------------
# Per-figure renderers. Each takes (ax, spec) and draws one panel.
# ---------------------------------------------------------------------------


def _groups(spec: FigureSpec, key: str) -> list[tuple[float, np.ndarray]]:
    """Sorted unique values of a sweep column with their row masks."""
    col = spec.merged(key)
    return [(v, col == v) for v in np.unique(col)]


def _render_fig1e(ax, spec: FigureSpec) -> None:
    n_0 = spec.merged("n_0")
    proj = spec.merged("g2_projector")
    thresh = spec.merged("g2_threshold")
    for gain, mask in _groups(spec, "gain"):
        order = np.argsort(n_0[mask])
        x = n_0[mask][order]
        line, = ax.plot(x, proj[mask][order], label=f"gain {gain:g}")
        y_t = thresh[mask][order]
        keep = np.isfinite(y_t)
        ax.plot(x[keep], y_t[keep], ls="--", color=line.get_color(), alpha=0.7)
    ax.axhline(0.5, color="0.6", lw=0.8, ls=":")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(r"initial occupation $\bar n_0$")
    ax.set_ylabel(r"$g^2_{\mathrm{cond}}(0)$")
    ax.legend(fontsize=8, title="solid: projector, dashed: threshold")


def _render_fig2a(ax, spec: FigureSpec) -> None:
    tau = spec.merged("tau_s")
    g2 = spec.merged("g2_cond")
    for t_off, mask in _groups(spec, "t_off_s"):
        order = np.argsort(tau[mask])
        ax.plot(tau[mask][order] * 1e9, g2[mask][order],
                label=f"$T_{{off}}$ = {t_off * 1e9:g} ns")
    ax.set_xlabel(r"$\tau$ (ns)")
    ax.set_ylabel(r"$g^2_{\mathrm{cond}}(\tau)$")
    ax.legend(fontsize=8)


def _render_fig2b(ax, spec: FigureSpec) -> None:
    t_off = spec.merged("t_off_s")
    g2 = spec.merged("g2_cond")
    for n_th, mask in _groups(spec, "n_th"):
        order = np.argsort(t_off[mask])
        ax.plot(t_off[mask][order], g2[mask][order],
                label=rf"$\bar n_{{th}}$ = {n_th:g}")
    ax.axhline(0.5, color="0.6", lw=0.8, ls=":")
    ax.axhline(2.0, color="0.6", lw=0.8, ls=":")
    ax.set_xscale("log")
    ax.set_xlabel(r"storage time $T_{off}$ (s)")
    ax.set_ylabel(r"$g^2_{\mathrm{cond}}(0)$")
    ax.legend(fontsize=8)


def _render_readout_sweep(ax, spec: FigureSpec, value_col: str,
                          ylabel: str) -> None:
    tau = spec.merged("tau_s")
    val = spec.merged(value_col)
    for n_r, mask in _groups(spec, "n_r"):
        order = np.argsort(tau[mask])
        ax.plot(tau[mask][order] * 1e9, val[mask][order],
                label=rf"$\bar n_r$ = {n_r:g}")
    ax.set_xscale("log")
    ax.set_xlabel(r"$\tau$ (ns)")
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=8)


def _render_fig3a(ax, spec: FigureSpec) -> None:
    _render_readout_sweep(ax, spec, "g1_cond_abs",
                          r"$|g^1_{\mathrm{cond}}(\tau)|$")


def _render_fig3b(ax, spec: FigureSpec) -> None:
    _render_readout_sweep(ax, spec, "g2_cond",
                          r"$g^2_{\mathrm{cond}}(\tau)$")


def _render_fig3c(ax, spec: FigureSpec) -> None:
    n_r = spec.merged("n_r")
    tau = spec.merged("tau_s")
    g2 = spec.merged("g2_cond")
    pred = spec.merged("rabi_freq_pred_rad_s")

    levels = np.unique(n_r)
    if levels.size < 2:
        raise RenderError("Fig3c needs at least two n_r values")
    tau_axis = np.unique(tau)
    surface = np.full((tau_axis.size, levels.size), np.nan)
    pred_by_level = np.zeros(levels.size)
    for j, level in enumerate(levels):
        mask = n_r == level
        order = np.argsort(tau[mask])
        t_j, g_j = tau[mask][order], g2[mask][order]
        # columns may be sampled on different tau grids; resample for
        # display only, never extrapolating past a column's own span
        inside = (tau_axis >= t_j[0]) & (tau_axis <= t_j[-1])
        surface[inside, j] = np.interp(tau_axis[inside], t_j, g_j)
        pred_by_level[j] = pred[mask][0]

    mesh = ax.pcolormesh(levels, tau_axis * 1e9, surface,
                         shading="nearest", cmap="viridis")
    plt.colorbar(mesh, ax=ax, label=r"$g^2_{\mathrm{cond}}(\tau)$")

    # dashed overlay: predicted positions of the first few oscillation
    # maxima, tau_k = k*pi/(2*omega), from the table's analytic column
    osc = pred_by_level > 0.0
    if np.any(osc):
        for k in (1, 2, 3):
            tau_k = k * math.pi / (2.0 * pred_by_level[osc])
            keep = tau_k <= tau_axis[-1]
            if np.any(keep):
                ax.plot(levels[osc][keep], tau_k[keep] * 1e9,
                        ls="--", color="w", lw=1.2,
                        label="exchange maxima" if k == 1 else None)
        ax.legend(fontsize=8, loc="upper right")
    ax.set_xscale("log")
    ax.set_xlabel(r"readout drive $\bar n_r$")
    ax.set_ylabel(r"$\tau$ (ns)")


def _render_figs1(ax, spec: FigureSpec) -> None:
    t = spec.merged("t_s")
    n_b = spec.merged("n_b")
    target = spec.merged("n_final_thermal")
    for n_r, mask in _groups(spec, "n_r"):
        order = np.argsort(t[mask])
        line, = ax.plot(t[mask][order] * 1e6, n_b[mask][order],
                        label=rf"$\bar n_r$ = {n_r:g}")
        ax.axhline(target[mask][0], color=line.get_color(),
                   lw=0.8, ls=":", alpha=0.6)
    ax.set_yscale("log")
    ax.set_xlabel(r"time ($\mu$s)")
    ax.set_ylabel(r"$\langle b^\dagger b \rangle$")
    ax.legend(fontsize=8, title="dotted: steady-state target")


_RENDERERS = {
    "Fig1e": _render_fig1e,
    "Fig2a": _render_fig2a,
    "Fig2b": _render_fig2b,
    "Fig3a": _render_fig3a,
    "Fig3b": _render_fig3b,
    "Fig3c": _render_fig3c,
    "FigS1": _render_figs1,
}


def render(spec: FigureSpec):
    """Draw the figure; returns the matplotlib Figure (caller saves)."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0), constrained_layout=True)
    _RENDERERS[spec.figure_id](ax, spec)
    ax.set_title(spec.figure_id)
    return fig


def count_dashed_overlays(fig) -> int:
    """Self-test probe: dashed Line2D artists across the figure's axes."""
    n = 0
    for ax in fig.axes:
        for line in ax.get_lines():
            if line.get_linestyle() == "--":
                n += 1
    return n


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        description="Render phonon-herald figure CSVs to images.")
    parser.add_argument("--csv", action="append", required=True,
                        metavar="PATH", help="input table (repeatable)")
    parser.add_argument("--figure", required=True,
                        choices=sorted(_RENDERERS),
                        help="figure id the tables must carry")
    parser.add_argument("--out", default=None, metavar="IMG",
                        help="output image path (e.g. fig.png)")
    parser.add_argument("--self-test", action="store_true",
                        help="Fig3c only: verify the dashed overlay was "
                             "drawn; --out becomes optional")
    args = parser.parse_args(argv)

    try:
        if args.self_test and args.figure != "Fig3c":
            raise RenderError("--self-test is defined for Fig3c only")
        if not args.self_test and args.out is None:
            raise RenderError("--out is required (unless --self-test)")
        spec = build_spec(args.figure, args.csv, args.out)
        fig = render(spec)
    except RenderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    try:
        if spec.out is not None:
            fig.savefig(spec.out, dpi=150)
            print(f"{spec.figure_id}: wrote {spec.out}")
        if args.self_test:
            n = count_dashed_overlays(fig)
            if n < 1:
                print("self-test FAIL: no dashed overlay artists",
                      file=sys.stderr)
                return 1
            print(f"self-test ok: {n} dashed overlay artists")
        return 0
    finally:
        plt.close(fig)


if __name__ == "__main__":
    sys.exit(main())
