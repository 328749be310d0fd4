"""Figures written next to the CSV output (non-interactive backend)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    # fixed metadata keeps repeated renders identical
    fig.savefig(path, dpi=110, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_metrics(curves: dict, out_dir) -> list[Path]:
    """Relative throughput, miss rate and sensing ratio against slot."""
    out_dir = Path(out_dir)
    panels = [
        ("relative_throughput", "relative throughput", "throughput.png"),
        ("miss_rate", "miss-detection probability", "miss_rate.png"),
        ("sensing_ratio", "sensings vs fixed diversity", "sensing_ratio.png"),
    ]
    paths = []
    for attr, ylabel, name in panels:
        fig, ax = plt.subplots(figsize=(6, 4))
        for label, m in curves.items():
            k = np.arange(1, m.horizon + 1)
            ax.plot(k, getattr(m, attr), label=label)
        if attr == "miss_rate":
            ax.axhline(0.1, color="k", ls=":", lw=1, label="target")
        ax.set_xscale("log")
        ax.set_xlabel("slot")
        ax.set_ylabel(ylabel)
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=8)
        paths.append(_save(fig, out_dir / name))
    return paths


def plot_bounds(ks, mean, lower, upper, path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    for b in range(mean.shape[1]):
        ax.plot(ks, mean[ks, b], "k-", lw=1, label="simulated" if b == 0 else None)
        ax.plot(ks, lower[:, b], "b--", lw=1, label="lower bound" if b == 0 else None)
        ax.plot(ks, upper[:, b], "r--", lw=1, label="upper bound" if b == 0 else None)
    ax.set_xlabel("k")
    ax.set_ylabel("expected band Q-value")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_su_calibration(cal, path) -> Path:
    """Averaged SU Q-values and their analytic limits against mean SNR."""
    snr = cal.mean_snr_db.ravel()
    fig, ax = plt.subplots(figsize=(6, 4))
    if cal.pd_curve is not None:
        ax.plot(cal.snr_grid, cal.pd_curve, "b-", lw=1, label="true detection probability")
    ax.plot(snr, cal.limit.ravel(), "kx", ms=4, label="analytic limit")
    ax.plot(snr, cal.mean_su_q.ravel(), "ro", ms=3, mfc="none", label="mean SU Q-value")
    ax.set_xlabel("mean SNR (dB)")
    ax.set_ylabel("detection probability")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_nonstat(res, path, window: int = 50) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    h = res.cfg.horizon
    for name in res.throughput:
        m = res.mean_curve(name)
        n = h // window
        blocks = m[:n * window].reshape(n, window).mean(axis=1)
        ax.plot((np.arange(n) + 1) * window, blocks, label=name)
    for k in res.schedule:
        ax.axvline(k, color="0.7", lw=0.8, ls=":")
    ax.set_xlabel("slot")
    ax.set_ylabel("mean throughput")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    return _save(fig, path)
