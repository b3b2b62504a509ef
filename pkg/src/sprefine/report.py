"""Matplotlib figures written next to the JSON outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .fixtures import colorize  # noqa: E402

# no timestamps or version strings, so reruns produce identical bytes
_PNG_META = {"Software": None}

plt.rcParams.update({
    "font.size": 8,
    "axes.titlesize": 9,
    "figure.dpi": 100,
})


def overlay_boundaries(image, sp_ids, color=(255, 255, 0)) -> np.ndarray:
    """Mark one-pixel superpixel boundaries (the lower/right pixel of each differing pair)."""
    ids = np.asarray(sp_ids)
    edge = np.zeros(ids.shape, dtype=bool)
    edge[:, 1:] |= ids[:, 1:] != ids[:, :-1]
    edge[1:, :] |= ids[1:, :] != ids[:-1, :]
    out = np.array(image, dtype=np.uint8, copy=True)
    out[edge] = color
    return out


def plot_free_energy(ax, trace):
    sweeps = np.arange(len(trace))
    ax.plot(sweeps, trace, marker="o", lw=1, ms=3, color="k")
    ax.set_xlabel("sweep")
    ax.set_ylabel("free energy")
    ax.set_title("mean-field free energy")
    ax.xaxis.get_major_locator().set_params(integer=True)


def render_report(path, image, sp_ids, baseline, refined, trace, gt=None, palette=None,
                  metrics: dict | None = None):
    """Save a panel figure: input with superpixels, label maps, energy trace."""
    panels = [("input + superpixels", overlay_boundaries(image, sp_ids)),
              ("unary argmax", colorize(baseline, palette)),
              ("refined", colorize(refined, palette))]
    if gt is not None:
        panels.append(("ground truth", colorize(gt, palette)))

    fig, axes = plt.subplots(1, len(panels) + 1, figsize=(2.6 * (len(panels) + 1), 3.0))
    for ax, (title, img) in zip(axes, panels):
        ax.imshow(img, interpolation="nearest")
        ax.set_title(title)
        ax.set_axis_off()
    if metrics:
        b, r = metrics["baseline"]["mean_iou"], metrics["refined"]["mean_iou"]
        axes[1].set_title(f"unary argmax\nmIoU {b:.3f}")
        axes[2].set_title(f"refined\nmIoU {r:.3f}")
    plot_free_energy(axes[-1], trace)
    fig.tight_layout()
    fig.savefig(path, format="png", metadata=_PNG_META)
    plt.close(fig)

