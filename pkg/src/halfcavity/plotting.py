"""Static SVG line plots drawn from already written curve CSVs."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .io import read_curve


def svg_from_csv(csv_paths, out_path, title: str = "", mirror_lags: bool = True) -> Path:
    """Plot one or more curve CSVs into a single SVG.

    Correlations are shown for negative lags too, by symmetry.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 3.5))
    for path in csv_paths:
        header, t, v = read_curve(path)
        if v.ndim > 1:
            v = v[:, 0]
        t_ns = t * 1e9
        if mirror_lags and t_ns[0] == 0:
            t_ns = np.concatenate([-t_ns[:0:-1], t_ns])
            v = np.concatenate([v[:0:-1], v])
        label = header.get("curve", Path(path).stem)
        if "phase_over_pi" in header:
            label += f" (2kL/pi={float(header['phase_over_pi']):.3g})"
        ax.plot(t_ns, v, lw=1.2, label=label)
    ax.set_xlabel("T (ns)")
    ax.set_ylabel("G2 (" + header.get("normalization", "raw") + ")")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=7)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return out_path
