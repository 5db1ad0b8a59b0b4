"""Figure rendering for PDPs and error reports.

Figures are built with matplotlib and written as self-contained SVG.
Each data bar carries an SVG group id encoding its coordinates (for
example ``pdp-bar-1-delay-33.356410``) so emitted files stay machine
checkable after rendering.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def pdp_figure(delays_ns, powers_dbm, bin_width_ns: float | None = None):
    """Bar chart of a power delay profile, one bar per occupied bin."""
    delays_ns = list(delays_ns)
    powers_dbm = list(powers_dbm)
    if not delays_ns or len(delays_ns) != len(powers_dbm):
        raise ValueError("need matching, non-empty delay and power sequences")
    if bin_width_ns is None:
        gaps = sorted(abs(b - a) for a, b in zip(delays_ns, delays_ns[1:]))
        bin_width_ns = gaps[0] if gaps and gaps[0] > 0 else max(delays_ns[0], 1.0)
    floor = min(powers_dbm) - 10.0
    fig, ax = plt.subplots(figsize=(7, 4))
    bars = ax.bar(delays_ns, [p - floor for p in powers_dbm], bottom=floor,
                  width=0.8 * bin_width_ns, color="#33658a", edgecolor="black",
                  linewidth=0.5)
    for i, (bar, delay) in enumerate(zip(bars, delays_ns)):
        bar.set_gid(f"pdp-bar-{i}-delay-{delay:.6f}")
    ax.set_xlabel("delay [ns]")
    ax.set_ylabel("received power [dBm]")
    ax.set_title("power delay profile")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    return fig


def errors_figure(rx_ids, errors_m, outlier_ids=()):
    """Per-receiver positioning error bars; outliers drawn hollow."""
    rx_ids = list(rx_ids)
    errors_m = list(errors_m)
    if not rx_ids or len(rx_ids) != len(errors_m):
        raise ValueError("need matching, non-empty rx and error sequences")
    outliers = set(outlier_ids)
    fig, ax = plt.subplots(figsize=(max(7, 0.5 * len(rx_ids)), 4))
    xs = range(len(rx_ids))
    colors = ["white" if rx in outliers else "#568259" for rx in rx_ids]
    edge = ["#a22522" if rx in outliers else "black" for rx in rx_ids]
    bars = ax.bar(xs, errors_m, color=colors, edgecolor=edge, linewidth=1.0)
    for i, (bar, rx, err) in enumerate(zip(bars, rx_ids, errors_m)):
        bar.set_gid(f"err-bar-{i}-{rx}-{err:.6f}")
    ax.set_xticks(list(xs))
    ax.set_xticklabels(rx_ids, rotation=45 if len(rx_ids) > 12 else 0,
                       ha="right" if len(rx_ids) > 12 else "center")
    ax.set_xlabel("rx id")
    ax.set_ylabel("positioning error [m]")
    ax.set_title("positioning errors" + (" (hollow = flagged outlier)" if outliers else ""))
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    return fig


def save_svg(fig, path) -> None:
    """Write a figure as SVG and release it."""
    fig.savefig(path, format="svg")
    plt.close(fig)
