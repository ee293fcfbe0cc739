"""Optional SVG figures. Never consulted for verdicts."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .events import ConditionReport
from .pathgen import regenerate, derive_seed
from .retirement import LadderParams, build_ladder
from .transforms import Unbounded


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "cps-lab"
    import matplotlib.pyplot as plt

    return plt


def _save(fig, target: Path):
    target.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(target, format="svg", metadata={"Date": None})


def ladder_figure(info: dict, target: Path) -> None:
    plt = _pyplot()
    path = regenerate(info["model"], info["grid"], derive_seed(info["seed"], 0))
    lad = build_ladder(path, LadderParams(info["eps0"], info["mode"]))
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.plot(path.grid.times, path.values, lw=0.7, color="0.4", label="log price")
    ax.step(lad.taus, lad.log_z, where="post", color="C3", label="log Z")
    ax.set_xlabel("t")
    ax.legend(loc="best", frameon=False)
    _save(fig, target)
    plt.close(fig)


def heatmap_figure(report: ConditionReport, target: Path) -> None:
    """p_hat over (delta, c) for the first (tau, h, j) combination."""
    plt = _pyplot()
    first = report.cells[0].spec
    cells = [
        c for c in report.cells
        if (c.spec.tau_rule, c.spec.h, c.spec.j) == (first.tau_rule, first.h, first.j)
    ]
    label = lambda d: "inf" if isinstance(d, Unbounded) else f"{d:g}"
    deltas = sorted({label(c.spec.delta) for c in cells})
    cs = sorted({c.spec.c for c in cells})
    grid = np.full((len(deltas), len(cs)), np.nan)
    for cell in cells:
        grid[deltas.index(label(cell.spec.delta)), cs.index(cell.spec.c)] = cell.p_hat
    fig, ax = plt.subplots(figsize=(4, 3.5))
    im = ax.imshow(grid, origin="lower", cmap="viridis", vmin=0, vmax=1)
    ax.set_xticks(range(len(cs)), [f"{c:g}" for c in cs])
    ax.set_yticks(range(len(deltas)), deltas)
    ax.set_xlabel("c")
    ax.set_ylabel("delta")
    ax.set_title(f"{report.condition}: j={first.j}, {first.tau_rule.label()}, h={first.h:g}")
    fig.colorbar(im, ax=ax, label="p_hat")
    _save(fig, target)
    plt.close(fig)


def transform_figure(info, target: Path) -> None:
    plt = _pyplot()
    spec, box = info
    xs = np.linspace(box[0], box[1], 2001)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(xs, spec(xs), color="C0")
    ax.set_xlabel("x")
    ax.set_ylabel(spec.id)
    _save(fig, target)
    plt.close(fig)


FIGURES = {"ladder": ladder_figure, "heatmap": heatmap_figure, "transform": transform_figure}


def write_plots(plots: dict, out_dir: Path) -> list[str]:
    written = []
    for name, info in sorted(plots.items()):
        target = out_dir / "plots" / f"{name}.svg"
        FIGURES[name](info, target)
        written.append(str(target.relative_to(out_dir)))
    return written
