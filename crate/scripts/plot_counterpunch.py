#!/usr/bin/env python3
"""Plot the driven response with the coupling on vs. off (`counterpunch`).

Usage: plot_counterpunch.py OUT_DIR [FIGURE.png]
"""
import json
import sys
from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np


def main() -> None:
    out_dir = Path(sys.argv[1] if len(sys.argv) > 1 else "out/counterpunch")
    data = np.genfromtxt(
        out_dir / "counterpunch.csv", delimiter=",", names=True, skip_header=1
    )
    manifest = json.loads((out_dir / "manifest.json").read_text())
    results = manifest["results"]

    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.plot(data["time"], data["free_momentum"], label="uncoupled", alpha=0.8)
    ax.plot(data["time"], data["coupled_momentum"], label="coupled", alpha=0.8)
    ax.axvline(results["measure_from"], color="k", ls=":", lw=1)
    ratio = results["momentum_ratio"]
    title = f"Late-time momentum ratio {ratio:.3f}"
    if "predicted_ratio" in results:
        title += f" (mass-ratio prediction {results['predicted_ratio']:.3f})"
    ax.set_title(title)
    ax.set_xlabel("t")
    ax.set_ylabel("P(t)")
    ax.legend()

    fig.tight_layout()
    target = sys.argv[2] if len(sys.argv) > 2 else out_dir / "counterpunch.png"
    fig.savefig(target, dpi=150)
    print(f"wrote {target}")


if __name__ == "__main__":
    main()
