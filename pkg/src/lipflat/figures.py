"""Deterministic matplotlib renderings for the CLI report path."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_DPI = 120


def _finish(fig, path):
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_points_figure(path, points, title=""):
    """Scatter a planar point cloud."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = np.column_stack([pts, np.zeros(len(pts))])
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.scatter(pts[:, 0], pts[:, 1], s=6, c="tab:blue")
    ax.set_aspect("equal")
    ax.set_title(title)
    _finish(fig, path)


def save_cover_figure(path, points, cover, delta, value, title=""):
    """Point cloud with the covering balls used by a content estimate.

    cover holds (center, radius) pairs as produced by the content module.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = np.column_stack([pts, np.zeros(len(pts))])
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.scatter(pts[:, 0], pts[:, 1], s=6, c="tab:blue", zorder=2)
    for ctr, radius in cover:
        ctr = np.atleast_1d(np.asarray(ctr, dtype=float))
        y = ctr[1] if len(ctr) > 1 else 0.0
        ax.add_patch(
            plt.Circle((ctr[0], y), radius, fill=False, color="tab:red", lw=0.8)
        )
    ax.set_aspect("equal")
    ax.set_title("%s  value=%.4g" % (title, value))
    _finish(fig, path)


def save_flatten_figure(path, before, after, title=""):
    """Before/after image panels of a flattening run (first two coordinates)."""
    b = np.atleast_2d(np.asarray(before, dtype=float))
    a = np.atleast_2d(np.asarray(after, dtype=float))
    if b.shape[1] == 1:
        b = np.column_stack([b[:, 0], np.zeros(len(b))])
        a = np.column_stack([a[:, 0], np.zeros(len(a))])
    fig, axes = plt.subplots(1, 2, figsize=(9, 4.5))
    axes[0].scatter(b[:, 0], b[:, 1], s=6, c="tab:blue")
    axes[0].set_title("before")
    axes[1].scatter(a[:, 0], a[:, 1], s=6, c="tab:orange")
    axes[1].set_title("after")
    for ax in axes:
        ax.set_aspect("equal")
    fig.suptitle(title)
    _finish(fig, path)


def save_boundary_figure(path, loop_nodes, loop_values, title=""):
    """Boundary circle and its image loop."""
    ln = np.asarray(loop_nodes, dtype=float)
    lv = np.asarray(loop_values, dtype=float)
    fig, ax = plt.subplots(figsize=(5, 5))
    closed_n = np.vstack([ln, ln[:1]])
    closed_v = np.vstack([lv, lv[:1]])
    ax.plot(closed_n[:, 0], closed_n[:, 1], c="tab:blue", lw=1.0, label="boundary")
    ax.plot(closed_v[:, 0], closed_v[:, 1], c="tab:orange", lw=1.0, label="image")
    ax.set_aspect("equal")
    ax.legend(loc="lower right")
    ax.set_title(title)
    _finish(fig, path)
