"""SVG line plots of closed-loop traces (density, flow and light settings per region)."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .trafficsim import read_state_csv

LABELS = {"deepc": "DeePC", "mpc": "MPC", "none": "No Control"}


def _series(run_dir: Path):
    rows = read_state_csv(run_dir / "trace.csv")
    regions = sorted({r["region"] for r in rows})
    ks = np.array(sorted({r["k"] for r in rows}))
    dens = {i: np.array([r["density"] for r in rows if r["region"] == i]) for i in regions}
    flow = {i: np.array([r["flow"] for r in rows if r["region"] == i]) for i in regions}
    lam = np.array([r["lambda"] for r in rows if r["region"] == regions[0]])
    return ks, regions, dens, flow, lam


def write_plots(out: Union[str, Path], run_dirs: Sequence[Union[str, Path]]) -> None:
    """One SVG per region (density and flow) plus one for the light settings.

    Density panels carry the critical and gridlock densities as dashed lines.
    Output is deterministic: fixed hash salt and no date metadata.
    """
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "deepc-traffic"
    out = Path(out)
    runs = []
    for d in run_dirs:
        d = Path(d)
        info = json.loads((d / "metrics.json").read_text())
        runs.append((info, _series(d)))
    info0, (ks0, regions, _, _, _) = runs[0]
    dt_min = info0["dt"] / 60.0
    meta = {"Date": None}
    for i in regions:
        fig, (ax_d, ax_f) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
        for info, (ks, _, dens, flow, _) in runs:
            lab = LABELS.get(info["controller"], info["controller"])
            ax_d.plot(ks * dt_min, dens[i], label=lab, lw=1.2)
            ax_f.plot(ks * dt_min, flow[i], label=lab, lw=1.2)
        ax_d.axhline(info0["rho_cr"][i], color="k", ls="--", lw=0.8, label="critical density")
        ax_d.axhline(info0["rho_max"][i], color="r", ls="--", lw=0.8, label="gridlock density")
        ax_d.set_ylabel("density (veh/km)")
        ax_d.set_title(f"Density region {i + 1}")
        ax_f.set_ylabel("flow (veh/h)")
        ax_f.set_title(f"Flow in region {i + 1}")
        ax_f.set_xlabel("time (min)")
        ax_d.legend(fontsize=8)
        fig.tight_layout()
        fig.savefig(out / f"region_{i + 1}.svg", format="svg", metadata=meta)
        plt.close(fig)
    fig, axes = plt.subplots(len(runs), 1, figsize=(7, 2.2 * len(runs)), sharex=True, squeeze=False)
    for ax, (info, (ks, _, _, _, lam)) in zip(axes[:, 0], runs):
        ax.plot(ks * dt_min, lam, lw=0.8)
        ax.set_ylim(-0.05, 1.05)
        ax.set_title(f"Control input of the traffic lights: {LABELS.get(info['controller'], '?')}")
        ax.set_ylabel("green ratio")
    axes[-1, 0].set_xlabel("time (min)")
    fig.tight_layout()
    fig.savefig(out / "lights.svg", format="svg", metadata=meta)
    plt.close(fig)
