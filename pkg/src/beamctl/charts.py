"""File-based figure rendering for the benchmark and spectrum reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402 - backend must be set first
import numpy as np  # noqa: E402

from .residents import Histogram  # noqa: E402
from .viz import BenchmarkResult  # noqa: E402


def save_benchmark_png(result: BenchmarkResult, path) -> str:
    """Total transfer time per mode over the bandwidth sweep; the
    crossover, when present, is marked with a vertical line."""
    series: dict[str, tuple[list, list]] = {}
    for row in result.rows:
        series.setdefault(row.mode, ([], []))
        series[row.mode][0].append(row.bandwidth)
        series[row.mode][1].append(row.total_time)

    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for mode, (bw, total) in sorted(series.items()):
        ax.plot(bw, total, marker="o", label=mode)
    if result.crossover is not None:
        ax.axvline(result.crossover, linestyle="--", color="gray")
        ax.annotate(f"crossover {result.crossover:.3g} B/s",
                    xy=(result.crossover, min(min(s[1]) for s in
                                              series.values())),
                    rotation=90, va="bottom", ha="right", fontsize=8)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("link bandwidth (bytes/s)")
    ax.set_ylabel("total transfer time (s)")
    ax.set_title("compressed vs direct readout")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return str(path)


def save_spectrum_png(h: Histogram, path, title: str = "spectrum") -> str:
    """1-D line plot; higher-rank histograms are summed onto the last
    axis (time-of-flight channels)."""
    counts = h.counts.reshape(h.dims)
    while counts.ndim > 1:
        counts = counts.sum(axis=0)
    channels = np.arange(counts.size)

    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    ax.step(channels, counts, where="mid")
    ax.set_xlabel("channel")
    ax.set_ylabel("counts")
    ax.set_title(f"{title} (total {int(counts.sum())}, "
                 f"monitor {h.monitor}, live {h.live_time:g} s)")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return str(path)
