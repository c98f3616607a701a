"""Vector figures for analysis reports.

Batch renderer only: the Agg backend is forced and every figure goes straight
to an SVG file.  Output is kept byte-reproducible by pinning the SVG id hash
salt and dropping the date metadata.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .power import Trace  # noqa: E402

plt.rcParams["svg.hashsalt"] = "railcad"


def _save(fig, path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def pair_trace_figure(trace1: Trace, trace0: Trace, rail1: str, rail0: str, path) -> None:
    """Line chart of both rails' current traces on a shared time axis."""
    fig, ax = plt.subplots(figsize=(7.0, 3.2))
    ax.plot(trace1.times, trace1.samples, label=f"{rail1} (rail 1)", linewidth=1.4)
    ax.plot(
        trace0.times, trace0.samples, label=f"{rail0} (rail 0)",
        linewidth=1.0, linestyle="--",
    )
    ax.set_xlabel("time")
    ax.set_ylabel("current")
    ax.set_title(f"{rail1} / {rail0}")
    ax.legend(loc="upper right", frameon=False)
    fig.tight_layout()
    _save(fig, path)


def balance_summary_figure(labels, balances, xcorrs, path) -> None:
    """Per-pair balance and cross-correlation, with the ideal 1.0 line."""
    fig, (ax0, ax1) = plt.subplots(2, 1, figsize=(7.0, 4.6), sharex=True)
    xs = range(len(labels))
    ax0.bar(xs, balances, color="#4878a8")
    ax0.axhline(1.0, color="black", linewidth=0.8, linestyle=":")
    ax0.set_ylabel("balance")
    ax1.bar(xs, xcorrs, color="#a85448")
    ax1.axhline(1.0, color="black", linewidth=0.8, linestyle=":")
    ax1.set_ylabel("xcorr")
    ax1.set_xticks(list(xs))
    ax1.set_xticklabels(labels, rotation=90, fontsize=7)
    fig.tight_layout()
    _save(fig, path)
