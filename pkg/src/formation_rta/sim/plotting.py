"""Display-only outputs: a gnuplot-readable .dat table and matplotlib figures."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .trace import Trace

DAT_COLUMNS = ("t_s", "lead_E", "lead_N", "lead_U", "wing_E", "wing_N", "wing_U",
               "h_collision", "h_fence_min")


def series(trace: Trace) -> np.ndarray:
    """One row per frame with the columns of :data:`DAT_COLUMNS`."""
    frames, lead = trace.column("LEAD", ("E", "N", "U"))
    _, wing = trace.column("W16", ("wing_E", "wing_N", "wing_U"))
    _, h = trace.column("BARRIER", ("h_collision", "h_fence_min"))
    dt = float(trace.scenario().get("dt_s", 0.02))
    n = min(len(frames), len(wing), len(h))
    return np.column_stack([frames[:n] * dt, lead[:n], wing[:n], h[:n]])


def write_dat(trace: Trace, path: str | Path) -> Path:
    path = Path(path)
    header = f"{trace.scenario().get('name', '')}\n" + " ".join(DAT_COLUMNS)
    np.savetxt(path, series(trace), fmt="%.6f", header=header)
    return path


def _fence_outline(spec: dict) -> np.ndarray | None:
    kind = spec.get("kind")
    if kind == "circle":
        th = np.linspace(0, 2 * np.pi, 181)
        c, r = spec["center_ft"], spec["radius_ft"]
        return np.column_stack([c[0] + r * np.cos(th), c[1] + r * np.sin(th)])
    if kind == "rect":
        e0, e1, n0, n1 = spec["E_min_ft"], spec["E_max_ft"], spec["N_min_ft"], spec["N_max_ft"]
        return np.array([[e0, n0], [e1, n0], [e1, n1], [e0, n1], [e0, n0]])
    if kind == "polygon":
        v = np.asarray(spec["vertices_ft"], dtype=float)
        return np.vstack([v, v[:1]])
    return None


def write_figures(trace: Trace, out_dir: str | Path, stem: str = "run") -> list[Path]:
    """Ground track and barrier values; returns the PNG paths written."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    data = series(trace)
    meta = trace.scenario()
    fence = meta.get("geofence")
    fence = json.loads(fence) if isinstance(fence, str) else fence
    paths = []

    fig, ax = plt.subplots(figsize=(7, 7))
    ax.plot(data[:, 1], data[:, 2], label="lead")
    ax.plot(data[:, 4], data[:, 5], label="wingman")
    if len(data):
        ax.plot(data[0, 4], data[0, 5], "o", color="C1")
    outline = _fence_outline(fence) if fence else None
    if outline is not None:
        ax.plot(outline[:, 0], outline[:, 1], "k--", lw=1, label="geofence (initial)")
    ax.set_xlabel("East [ft]")
    ax.set_ylabel("North [ft]")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(loc="best")
    ax.set_title(meta.get("name", ""))
    p = out_dir / f"{stem}_track.png"
    fig.savefig(p, dpi=110, bbox_inches="tight")
    plt.close(fig)
    paths.append(p)

    fig, axes = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    for ax, col, name in zip(axes, (7, 8), ("h_collision [ft]", "min h_fence [ft]")):
        ax.plot(data[:, 0], data[:, col])
        ax.axhline(0.0, color="r", lw=0.8)
        ax.set_ylabel(name)
    axes[-1].set_xlabel("t [s]")
    p = out_dir / f"{stem}_barriers.png"
    fig.savefig(p, dpi=110, bbox_inches="tight")
    plt.close(fig)
    paths.append(p)
    return paths
