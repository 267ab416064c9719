"""SVG line charts for training logs (loss vs epoch) and SNR sweeps (rate vs SNR)."""

from __future__ import annotations

import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# fixed ids and no timestamp, so identical CSVs give identical SVG bytes
plt.rcParams["svg.hashsalt"] = "beamforge"
plt.rcParams["svg.fonttype"] = "none"


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def plot_loss(csv_path, svg_path):
    rows = _read(csv_path)
    if rows and "val_loss" not in rows[0]:
        raise ValueError(f"{csv_path} is not a training log")
    ep = [int(r["epoch"]) for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ep, [float(r["train_loss"]) for r in rows], marker="o", ms=3, label="training")
    ax.plot(ep, [float(r["val_loss"]) for r in rows], marker="s", ms=3, label="validation")
    ax.set_xlabel("epoch")
    ax.set_ylabel("sigmoid cross-entropy loss")
    ax.grid(True, alpha=0.3)
    ax.legend()
    _save(fig, svg_path)


def plot_sweep(csv_path, svg_path):
    rows = _read(csv_path)
    if rows and "spectral_efficiency" not in rows[0]:
        raise ValueError(f"{csv_path} is not an evaluation report")
    fig, ax = plt.subplots(figsize=(6, 4))
    for method, marker in (("genie", "^"), ("nn", "o"), ("random", "x")):
        pts = [(float(r["snr_db"]), float(r["spectral_efficiency"]))
               for r in rows if r["method"] == method]
        if pts:
            ax.plot(*zip(*pts), marker=marker, label=method)
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("spectral efficiency (bits/s/Hz)")
    ax.grid(True, alpha=0.3)
    ax.legend()
    _save(fig, svg_path)


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
