#!/usr/bin/env python3
"""Plot fringe visibility/purity decay and the Wigner snapshots (`decohere`).

Usage: plot_decoherence.py OUT_DIR [FIGURE.png]
"""
import sys
from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np


def load_wigner(path: Path):
    rows = np.genfromtxt(path, delimiter=",", names=True, skip_header=1)
    q = np.unique(rows["q"])
    p = np.unique(rows["p"])
    f = rows["f"].reshape(len(q), len(p))
    return q, p, f


def main() -> None:
    out_dir = Path(sys.argv[1] if len(sys.argv) > 1 else "out/decohere")
    decay = np.genfromtxt(
        out_dir / "decoherence.csv", delimiter=",", names=True, skip_header=1
    )

    have_wigner = (out_dir / "wigner_initial.csv").exists()
    ncols = 3 if have_wigner else 1
    fig, axes = plt.subplots(1, ncols, figsize=(5 * ncols, 4))
    axes = np.atleast_1d(axes)

    axes[0].semilogy(decay["time"], decay["fringe_visibility"], label="visibility")
    axes[0].semilogy(decay["time"], decay["purity"], label="purity")
    axes[0].set_xlabel("t")
    axes[0].legend()
    axes[0].set_title("Fringe visibility and purity")

    if have_wigner:
        for ax, name, title in (
            (axes[1], "wigner_initial.csv", "Wigner, t = 0"),
            (axes[2], "wigner_final.csv", "Wigner, final"),
        ):
            q, p, f = load_wigner(out_dir / name)
            scale = np.abs(f).max()
            mesh = ax.pcolormesh(
                q, p, f.T, cmap="RdBu_r", vmin=-scale, vmax=scale, shading="auto"
            )
            fig.colorbar(mesh, ax=ax)
            ax.set_xlabel("Q")
            ax.set_ylabel("P")
            ax.set_title(title)

    fig.tight_layout()
    target = sys.argv[2] if len(sys.argv) > 2 else out_dir / "decoherence.png"
    fig.savefig(target, dpi=150)
    print(f"wrote {target}")


if __name__ == "__main__":
    main()
