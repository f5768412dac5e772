#!/usr/bin/env python3
"""Plot the memory kernel and noise correlation emitted by the `kernel` scenario.

Usage: plot_kernel.py OUT_DIR [FIGURE.png]
"""
import sys
from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np


def main() -> None:
    out_dir = Path(sys.argv[1] if len(sys.argv) > 1 else "out/kernel")
    data = np.genfromtxt(out_dir / "kernel.csv", delimiter=",", names=True, skip_header=1)

    fig, (ax_k, ax_n) = plt.subplots(1, 2, figsize=(10, 4))
    ax_k.plot(data["time"], data["memory_kernel"], label="continuum")
    ax_k.plot(data["time"], data["memory_kernel_discrete"], "--", label="discrete bath")
    ax_k.set_xlabel("t")
    ax_k.set_ylabel("K(t)")
    ax_k.set_title("Memory kernel")
    ax_k.legend()

    ax_n.plot(data["time"], data["noise_correlation"], label="continuum")
    ax_n.plot(data["time"], data["noise_correlation_discrete"], "--", label="discrete bath")
    ax_n.set_xlabel("t")
    ax_n.set_ylabel("ν(t)")
    ax_n.set_title("Noise correlation")
    ax_n.legend()

    fig.tight_layout()
    target = sys.argv[2] if len(sys.argv) > 2 else out_dir / "kernel.png"
    fig.savefig(target, dpi=150)
    print(f"wrote {target}")


if __name__ == "__main__":
    main()
