"""Figure rendering for experiment reports.

Figures are rendered to files next to the CSV outputs; they are a
convenience view of the same rows and never feed back into the pipeline.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

_LOG_PARAMS = {"sigma_rcs2", "omega0"}


def render_experiment(report, outdir: str, name: str) -> list[str]:
    """One detection-probability figure and one SINR figure per report."""
    rows = report.rows
    if not rows:
        return []
    param = rows[0]["sweep_param"]
    x = [row["sweep_value"] for row in rows]
    logx = param in _LOG_PARAMS and all(v > 0 for v in x)
    out = Path(outdir)
    written = []

    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.plot(x, [r["min_detection_prob"] for r in rows], "o-",
            color="tab:blue")
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel(param)
    ax.set_ylabel("min detection probability")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    path = out / f"{name}_detection.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(str(path))

    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.plot(x, [r["mean_min_comm_sinr_db"] for r in rows], "s-",
            color="tab:orange", label="min comm SINR")
    ax.plot(x, [r["mean_min_sensing_sinr_db"] for r in rows], "^-",
            color="tab:green", label="min sensing SINR")
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel(param)
    ax.set_ylabel("SINR [dB]")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    path = out / f"{name}_sinr.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(str(path))
    return written
