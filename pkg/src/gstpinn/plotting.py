"""Figures for the evaluate/compare reports, rendered to SVG files."""

from __future__ import annotations

import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

SLICE_TIMES = {
    "burgers": (0.3, 0.6, 0.9),
    "fisher": (0.3, 0.6, 0.9),
    "sorption": (150.0, 250.0, 350.0),
}


def _save(fig, path, stamp: str) -> None:
    # svg metadata keeps the output byte-stable (no date) and carries the run stamp
    fig.savefig(path, format="svg", metadata={"Date": None, "Description": stamp})
    plt.close(fig)


def heatmap(path, t, x, field, title: str, stamp: str = "", cmap: str = "viridis") -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    mesh = ax.pcolormesh(t, x, np.asarray(field).T, shading="nearest", cmap=cmap)
    fig.colorbar(mesh, ax=ax)
    ax.set_xlabel("t")
    ax.set_ylabel("x")
    ax.set_title(title)
    fig.tight_layout()
    _save(fig, path, stamp)


def solution_heatmaps(out_dir, reference, pred, stamp: str = "") -> list:
    """u_hat, u and |u_hat - u| over the reference grid."""
    err = np.abs(pred - reference.values)
    items = [("u_pred.svg", pred, "predicted u", "viridis"),
             ("u_ref.svg", reference.values, "reference u", "viridis"),
             ("abs_err.svg", err, "|u_pred - u|", "magma")]
    paths = []
    for name, field, title, cmap in items:
        path = out_dir / name
        heatmap(path, reference.t, reference.x, field, title, stamp, cmap)
        paths.append(path)
    return paths


def slice_rows(reference, predict_at, times) -> list[dict]:
    """Rows t, x, u_ref, u_pred at each requested time; ``predict_at(t, x)`` gives the net."""
    rows = []
    for t in times:
        u = reference.at_time(t)
        up = predict_at(t, reference.x)
        for xi, a, b in zip(reference.x, u, up):
            rows.append({"t": t, "x": float(xi), "u_ref": float(a), "u_pred": float(b)})
    return rows


def write_slices(path_csv, path_svg, rows, times, stamp: str = "", meta=None) -> None:
    with open(path_csv, "w", newline="") as fh:
        for k, v in (meta or {}).items():
            fh.write(f"# {k}={v}\n")
        w = csv.DictWriter(fh, fieldnames=["t", "x", "u_ref", "u_pred"])
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(float(v)) for k, v in r.items()})
    fig, axes = plt.subplots(1, len(times), figsize=(4 * len(times), 3), squeeze=False)
    for ax, t in zip(axes[0], times):
        sel = [r for r in rows if r["t"] == t]
        x = [r["x"] for r in sel]
        ax.plot(x, [r["u_ref"] for r in sel], "k-", label="reference")
        ax.plot(x, [r["u_pred"] for r in sel], "r--", label="predicted")
        ax.set_title(f"t = {t:g}")
        ax.set_xlabel("x")
    axes[0][0].set_ylabel("u")
    axes[0][0].legend()
    fig.tight_layout()
    _save(fig, path_svg, stamp)


def history_plot(path, histories: dict, stamp: str = "") -> None:
    """MSE against iteration for one or more named runs (log scale)."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for name, hist in histories.items():
        pts = [(r.iteration, r.mse) for r in hist.records if r.mse is not None]
        if pts:
            it, mse = zip(*pts)
            ax.semilogy(it, mse, label=name)
    ax.set_xlabel("iteration")
    ax.set_ylabel("MSE")
    if histories:
        ax.legend()
    fig.tight_layout()
    _save(fig, path, stamp)
