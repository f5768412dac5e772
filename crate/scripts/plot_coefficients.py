#!/usr/bin/env python3
"""Plot the extracted time-local coefficients (`extract`/`locality` scenarios).

Usage: plot_coefficients.py OUT_DIR [FIGURE.png]
"""
import sys
from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np


def main() -> None:
    out_dir = Path(sys.argv[1] if len(sys.argv) > 1 else "out/extract")
    data = np.genfromtxt(
        out_dir / "coefficients.csv", delimiter=",", names=True, skip_header=1
    )
    valid = data["valid"] > 0.5

    fig, axes = plt.subplots(2, 2, figsize=(10, 7), sharex=True)
    panels = [
        ("omega_bar_sq", r"$\bar\Omega^2(t)$"),
        ("gamma_bar", r"$\bar\gamma(t)$"),
        ("anomalous", r"$d(t)$"),
        ("diffusion", r"$D(t)$"),
    ]
    for ax, (column, label) in zip(axes.flat, panels):
        ax.plot(data["time"][valid], data[column][valid])
        if (~valid).any():
            ax.plot(
                data["time"][~valid], data[column][~valid], "rx", label="masked"
            )
            ax.legend()
        ax.set_ylabel(label)
    for ax in axes[-1]:
        ax.set_xlabel("t")

    fig.tight_layout()
    target = sys.argv[2] if len(sys.argv) > 2 else out_dir / "coefficients.png"
    fig.savefig(target, dpi=150)
    print(f"wrote {target}")


if __name__ == "__main__":
    main()
