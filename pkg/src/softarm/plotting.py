"""Static SVG figures: tracking overlays and an error boxplot.

matplotlib is an optional dependency; it is imported lazily so the rest of
the package works without it.
"""

from __future__ import annotations

import io

import numpy as np

from .simulation import write_atomic


def _pyplot():
    try:
        import matplotlib
    except ImportError as exc:  # pragma: no cover - depends on the environment
        raise RuntimeError("plotting needs matplotlib (pip install 'artifact[plot]')") from exc
    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "softarm"
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path):
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
    write_atomic(path, buf.getvalue())


def tracking_figure(result, path) -> None:
    """Actuator elongations and the tip path against their references."""
    plt = _pyplot()
    tr = result.trace
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for i, color in enumerate(("tab:red", "tab:blue", "tab:green")):
        axes[0].plot(tr.t, 1e3 * tr.q_d[:, i], color="k", lw=0.8)
        axes[0].plot(tr.t, 1e3 * tr.q[:, i], color=color, lw=0.8, label=f"l{i + 1}")
    axes[0].set_xlabel("t [s]")
    axes[0].set_ylabel("elongation [mm]")
    axes[0].legend(loc="upper right", fontsize=8)
    from .kinematics import tip_positions

    ref = tip_positions(result.scenario.geometry, tr.q_d)
    axes[1].plot(1e3 * ref[:, 0], 1e3 * ref[:, 1], color="k", lw=0.8, label="desired")
    axes[1].plot(1e3 * tr.tip[:, 0], 1e3 * tr.tip[:, 1], color="tab:red", lw=0.8,
                 label=result.scenario.controller.upper())
    axes[1].set_xlabel("x [mm]")
    axes[1].set_ylabel("y [mm]")
    axes[1].set_aspect("equal", adjustable="datalim")
    axes[1].legend(loc="upper right", fontsize=8)
    title = result.scenario.name + ("" if result.stable else f" (diverged at {tr.diverged_at:.3g} s)")
    fig.suptitle(title)
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)


def error_boxplot(results, path) -> None:
    """Task-space error distribution of every scenario over its statistics window."""
    plt = _pyplot()
    data, labels = [], []
    for res in results:
        if res.report is None:
            continue
        mask = res.report.times >= res.report.window_start - 1e-12
        data.append(1e3 * res.report.task_errors[mask])
        labels.append(res.scenario.name)
    fig, ax = plt.subplots(figsize=(max(6, 0.7 * len(data) + 2), 4))
    if data:
        ax.boxplot(data, showfliers=False)
        ax.set_xticks(np.arange(1, len(labels) + 1))
        ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=8)
    ax.set_ylabel("task-space L2 error [mm]")
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)
