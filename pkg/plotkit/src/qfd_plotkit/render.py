"""Deterministic figure rendering from artifact directories.

plotkit computes no physics: every plotted number is read from the
artifact files. Canvas size, colormap, and axis ranges are fixed by the
spec and the manifest's recorded extents.
"""

import os
import sys
from dataclasses import dataclass
from typing import Optional

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .artifacts import (read_csv_columns, read_field, read_manifest,
                        read_trajectories, snapshot_rho_series)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

matplotlib.rcParams["svg.hashsalt"] = "qfd-plotkit"

KINDS = ("density_trajectories", "qpotential", "residuals", "comparison")
FIGSIZE = (8.0, 5.0)
DPI = 130
CMAP = "viridis"


class PlotSpecError(ValueError):
    pass


@dataclass(frozen=True)
class PlotSpec:
    artifact_dir: str
    kind: str
    output: str
    time_index: Optional[int] = None

    @classmethod
    def from_toml(cls, path):
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except OSError as exc:
            raise PlotSpecError(f"cannot read plot spec {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise PlotSpecError(f"TOML error in {path}: {exc}") from exc
        allowed = {"artifact_dir", "kind", "output", "time_index"}
        unknown = set(raw) - allowed
        if unknown:
            raise PlotSpecError(f"unknown plot spec keys: {sorted(unknown)}")
        for key in ("artifact_dir", "kind", "output"):
            if key not in raw:
                raise PlotSpecError(f"plot spec missing {key!r}")
        if raw["kind"] not in KINDS:
            raise PlotSpecError(f"kind must be one of {KINDS}, got {raw['kind']!r}")
        return cls(artifact_dir=raw["artifact_dir"], kind=raw["kind"],
                   output=raw["output"], time_index=raw.get("time_index"))


def _save(fig, output):
    paths = []
    for ext in ("png", "svg"):
        path = f"{output}.{ext}"
        fig.savefig(path, dpi=DPI, metadata={"Date": None} if ext == "svg" else None)
        paths.append(path)
    plt.close(fig)
    return paths


def _check_time_index(manifest, idx):
    times = manifest["extents"]["snapshot_times"]
    if not -len(times) <= idx < len(times):
        raise PlotSpecError(f"time_index {idx} outside snapshot range "
                            f"[0, {len(times) - 1}]")
    return times[idx]


def build_density_trajectories(spec, manifest):
    extents = manifest["extents"]
    times = np.asarray(extents["snapshot_times"])
    x, rho = snapshot_rho_series(spec.artifact_dir, times)
    fig, ax = plt.subplots(figsize=FIGSIZE)
    mesh = ax.pcolormesh(x, times, rho, cmap=CMAP, shading="nearest")
    fig.colorbar(mesh, ax=ax, label="density")
    traj_path = os.path.join(spec.artifact_dir, "trajectories.csv")
    n_traj = extents.get("n_traj")
    if os.path.exists(traj_path):
        t_traj, pos = read_trajectories(traj_path)
        for i in range(pos.shape[1]):
            ax.plot(pos[:, i, 0], t_traj, color="white", lw=0.5, alpha=0.6)
        ax.plot([], [], color="white", lw=0.5, label=f"{n_traj} trajectories")
        ax.legend(loc="upper right")
    ax.set_xlim(extents["x_min"], extents["x_max"])
    ax.set_ylim(times[0], times[-1])
    ax.set_xlabel("x (a.u.)")
    ax.set_ylabel("t (a.u.)")
    ax.set_title("density with trajectory overlay")
    return fig


def build_qpotential(spec, manifest):
    idx = spec.time_index if spec.time_index is not None else 0
    t = _check_time_index(manifest, idx)
    path = os.path.join(spec.artifact_dir, f"hydro_{idx:04d}_q_potential.qfdf")
    if not os.path.exists(path):
        raise FileNotFoundError(f"missing artifact file: {path}")
    f = read_field(path)
    fig, ax = plt.subplots(figsize=FIGSIZE)
    if f.values.ndim == 1:
        ax.plot(f.x, np.real(f.values), color="tab:purple", lw=1.2)
        ax.set_xlabel("x (a.u.)")
        ax.set_ylabel("quantum potential (hartree)")
    else:
        mesh = ax.pcolormesh(f.x, f.y, np.real(f.values).T, cmap=CMAP,
                             shading="nearest")
        fig.colorbar(mesh, ax=ax, label="quantum potential (hartree)")
        ax.set_xlabel("r1 (a.u.)")
        ax.set_ylabel("r2 (a.u.)")
    ax.set_xlim(manifest["extents"]["x_min"], manifest["extents"]["x_max"])
    ax.set_title(f"quantum potential at t = {t:g}")
    return fig


def build_residuals(spec, manifest):
    for name in ("residuals.csv", "reduced_continuity.csv"):
        path = os.path.join(spec.artifact_dir, name)
        if os.path.exists(path):
            break
    else:
        raise FileNotFoundError(
            f"missing artifact file: {os.path.join(spec.artifact_dir, 'residuals.csv')}")
    cols = read_csv_columns(path)
    fig, ax = plt.subplots(figsize=FIGSIZE)
    ax.plot(cols["t"], cols["max_abs"], marker="o", ms=3, lw=1.0,
            color="tab:red", label="max |residual|")
    if "l2" in cols:
        ax.plot(cols["t"], cols["l2"], marker="s", ms=3, lw=1.0,
                color="tab:blue", label="L2 norm")
    top = float(np.max(cols["max_abs"]))
    ax.set_ylim(0.0, top)   # y-axis max is exactly the reported maximum
    ax.set_xlabel("t (a.u.)")
    ax.set_ylabel("continuity residual")
    ax.annotate(f"max residual: {top!r}", xy=(0.02, 0.94),
                xycoords="axes fraction", fontsize=9)
    ax.legend(loc="upper left")
    ax.set_title("continuity residual")
    return fig


def build_comparison(spec, manifest):
    d = spec.artifact_dir
    cmp_path = os.path.join(d, "trajectory_comparison.csv")
    cols = read_csv_columns(cmp_path)
    max_dev = float(max(np.max(cols["max_dev_p1"]), np.max(cols["max_dev_p2"])))
    t_full, full = read_trajectories(os.path.join(d, "traj_full_p1.csv"))
    t_hart, hart = read_trajectories(os.path.join(d, "traj_hartree_p1.csv"))
    fig, ax = plt.subplots(figsize=FIGSIZE)
    for i in range(full.shape[1]):
        ax.plot(t_full, full[:, i, 0], color="tab:blue", lw=1.0,
                label="full route" if i == 0 else None)
        ax.plot(t_hart, hart[:, i, 0], color="tab:orange", lw=1.0, ls="--",
                label="mean-field route" if i == 0 else None)
    ax.annotate(f"max deviation: {max_dev!r}", xy=(0.02, 0.02),
                xycoords="axes fraction", fontsize=9)
    ax.set_xlabel("t (a.u.)")
    ax.set_ylabel("particle-1 position (a.u.)")
    ax.legend(loc="upper right")
    ax.set_title("full vs mean-field trajectories")
    return fig


_BUILDERS = {
    "density_trajectories": build_density_trajectories,
    "qpotential": build_qpotential,
    "residuals": build_residuals,
    "comparison": build_comparison,
}


def build_figure(spec: PlotSpec):
    """Build (but do not save) the figure for a spec; used by tests to
    inspect axes."""
    manifest = read_manifest(spec.artifact_dir)
    return _BUILDERS[spec.kind](spec, manifest)


def render(spec: PlotSpec):
    """Render one figure; returns the written image paths (png, svg)."""
    return _save(build_figure(spec), spec.output)
