"""Matplotlib figures for run reports (written to files, never shown)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .certcheck import CheckReport  # noqa: E402

_COLORS = {"pass": "tab:green", "fail": "tab:red", "vacuous": "tab:gray"}


def plot_check_margins(report: CheckReport, path: Path) -> None:
    conds = report.conditions
    fig, ax = plt.subplots(figsize=(7, 0.28 * len(conds) + 1.2))
    ys = np.arange(len(conds))
    vals = [0.0 if c.worst_margin is None else c.worst_margin for c in conds]
    ax.barh(ys, vals, color=[_COLORS.get(c.verdict, "k") for c in conds])
    ax.set_yticks(ys, [c.label for c in conds], fontsize=6)
    ax.axvline(0, color="k", lw=0.6)
    ax.axvline(-report.config.eps, color="tab:red", lw=0.6, ls="--")
    ax.set_xscale("symlog", linthresh=1e-6)
    ax.set_xlabel("worst sampled margin (vacuous rows drawn at 0)")
    ax.set_title(f"certificate check: {report.verdict}")
    ax.invert_yaxis()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_certificate_slice(cert, spec, path: Path, n: int = 120) -> None:
    """``T(x0, y)`` over ``y`` in ``X`` with ``x0`` the centre of ``X0``."""
    X, X0 = spec.system.X, spec.system.X0
    if X.bbox is None or X0.bbox is None or spec.n != 2:
        return
    x0 = [(lo + hi) / 2 for lo, hi in X0.bbox]
    (a, b), (c, d) = X.bbox
    g1, g2 = np.meshgrid(np.linspace(a, b, n), np.linspace(c, d, n))
    names = [nm for nm in cert.names("T")]
    if spec.product is not None:
        q0 = spec.product.dpa.initial
        names = [nm for nm in names if nm.startswith(f"T^({q0},")]
    names = names[:3]
    fig, axes = plt.subplots(1, len(names), figsize=(4.2 * len(names), 3.6), squeeze=False)
    for ax, nm in zip(axes[0], names):
        env = {"x1": np.full(g1.shape, x0[0]), "x2": np.full(g1.shape, x0[1]), "y1": g1, "y2": g2}
        vals = cert[nm].eval_many(env)
        cs = ax.contourf(g1, g2, vals, levels=30, cmap="viridis")
        ax.contour(g1, g2, vals, levels=[0.0], colors="w", linewidths=1.2)
        fig.colorbar(cs, ax=ax, shrink=0.8)
        ax.plot(*x0, "r*")
        ax.set_title(f"{nm}(x0, y)", fontsize=9)
        ax.set_xlabel("y1")
        ax.set_ylabel("y2")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _box(ax, s, **kw):
    if s is None or s.bbox is None or len(s.bbox) != 2:
        return
    (a, b), (c, d) = s.bbox
    ax.add_patch(plt.Rectangle((a, c), b - a, d - c, fill=False, **kw))


def plot_trajectories(trajs: Sequence, cfg, spec, path: Path, limit: int = 30) -> None:
    fig, ax = plt.subplots(figsize=(5, 4.2))
    for tr in trajs[:limit]:
        xs = np.array(tr.states)
        ax.plot(xs[:, 0], xs[:, 1], lw=0.7, alpha=0.8)
        ax.plot(xs[0, 0], xs[0, 1], "k.", ms=3)
    _box(ax, spec.system.X, ec="k", lw=1.0)
    _box(ax, spec.system.X0, ec="tab:blue", lw=1.0, ls="--")
    _box(ax, cfg.sets.get("X_VF"), ec="tab:red", lw=1.0)
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.set_title("closed-loop rollouts (X black, X0 dashed, X_VF red)", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_visits(trajs: Sequence, path: Path) -> None:
    last_vf = [(-1 if t.last_vf_step is None else t.last_vf_step) for t in trajs]
    first_inf = [(-1 if t.first_inf_step is None else t.first_inf_step) for t in trajs]
    fig, ax = plt.subplots(1, 2, figsize=(8, 3))
    ax[0].hist(last_vf, bins=30, color="tab:red")
    ax[0].set_xlabel("last X_VF visit step (-1: never)")
    ax[1].hist(first_inf, bins=30, color="tab:green")
    ax[1].set_xlabel("first X_INF visit step (-1: never)")
    for a in ax:
        a.set_ylabel("rollouts")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_chain_gaps(gaps: Sequence[int], path: Path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.plot(range(1, len(gaps) + 1), gaps, "o-", ms=3)
    ax.set_xlabel("visit index")
    ax.set_ylabel("steps to next X_INF visit")
    ax.set_title("uncontrolled chain: gaps between visits", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
