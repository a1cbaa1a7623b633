"""Figure rendering for the CLI report paths (headless matplotlib)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def save_spectrogram_figure(values: np.ndarray, path: str | Path,
                            title: str = "log-mel spectrogram") -> None:
    """Render a 49x43 feature matrix as a heatmap (time on x, band on y)."""
    fig, ax = plt.subplots(figsize=(6, 4))
    im = ax.imshow(np.asarray(values).T, origin="lower", aspect="auto",
                   interpolation="nearest", cmap="magma")
    ax.set_xlabel("time slice")
    ax.set_ylabel("mel band")
    ax.set_title(title)
    fig.colorbar(im, ax=ax, label="ln energy")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_bench_figure(report, path: str | Path) -> None:
    """Latency aggregates and budget utilization side by side."""
    fig, (ax_lat, ax_mem) = plt.subplots(1, 2, figsize=(10, 4))

    latencies = [(name, mean, lo, hi) for name, mean, lo, hi in report.rows
                 if name.endswith("_ms")]
    names = [n.replace("_ms", "") for n, *_ in latencies]
    means = [m for _, m, _, _ in latencies]
    spans = [[m - lo for _, m, lo, _ in latencies], [hi - m for _, m, _, hi in latencies]]
    ax_lat.bar(names, means, yerr=spans, capsize=4, color="#4878cf")
    ax_lat.set_ylabel("virtual ms")
    ax_lat.set_title(f"latency over {report.runs} run(s)")
    ax_lat.tick_params(axis="x", rotation=20)

    labels = [name.replace("_bytes", "") for name, *_ in report.checks]
    used = [value for _, value, _, _ in report.checks]
    budgets = [budget for _, _, budget, _ in report.checks]
    y = np.arange(len(labels))
    ax_mem.barh(y, budgets, color="#dddddd", label="budget")
    ax_mem.barh(y, used, color="#6acc65", label="used")
    ax_mem.set_yticks(y, labels)
    ax_mem.set_xlabel("bytes")
    ax_mem.set_title("flash / arena budgets")
    ax_mem.legend(loc="lower right")

    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_transcript_timeline(transcript: list[str], path: str | Path) -> None:
    """Mode/light timeline extracted from transcript ACTION lines."""
    times, modes = [0], ["idle"]
    for line in transcript:
        parts = line.split()
        if len(parts) >= 5 and parts[2] == "ACTION" and parts[3] == "mode":
            times.append(int(parts[0][2:]))
            modes.append(parts[4])
    order = {"idle": 0, "listening": 1, "dispatching": 2}
    colors = {"idle": "#d62728", "listening": "#2ca02c", "dispatching": "#1f77b4"}
    fig, ax = plt.subplots(figsize=(8, 2.4))
    end = max(times[-1] + 500, 1000)
    for i, (t, mode) in enumerate(zip(times, modes)):
        t_next = times[i + 1] if i + 1 < len(times) else end
        ax.barh(0, t_next - t, left=t, color=colors[mode], height=0.5)
    ax.set_yticks([])
    ax.set_xlabel("virtual time (ms)")
    ax.set_title("unit mode (red=idle, green=listening, blue=dispatching)")
    ax.set_ylim(-1, 1)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
