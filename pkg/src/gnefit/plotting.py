"""PNG figures for reports (non-interactive backend)."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    tmp = path + ".tmp.png"
    fig.savefig(tmp, dpi=110, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)
    os.replace(tmp, path)
    return path


def solution_map(P, X, path, X_ref=None, title=""):
    """x(p) curves for a scalar parameter; the reference map is dashed when given."""
    p = np.asarray(P, dtype=float)[:, 0]
    order = np.argsort(p)
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    for j in range(X.shape[1]):
        ax.plot(p[order], X[order, j], lw=1.6, label=f"x_{j} model")
        if X_ref is not None:
            ax.plot(p[order], X_ref[order, j], "k--", lw=1.0, label=f"x_{j} reference")
    ax.set_xlabel("p")
    ax.set_ylabel("x")
    ax.set_title(title)
    ax.legend(fontsize=7)
    ax.grid(alpha=0.3)
    return _save(fig, path)


def best_response_scatter(X, XB, path, title=""):
    """Predicted decisions against the best responses to them."""
    X, XB = np.asarray(X), np.asarray(XB)
    fig, ax = plt.subplots(figsize=(4.2, 4.2))
    lo = float(min(X.min(), XB.min()))
    hi = float(max(X.max(), XB.max()))
    ax.plot([lo, hi], [lo, hi], "k-", lw=0.8)
    for j in range(X.shape[1]):
        ax.scatter(XB[:, j], X[:, j], s=4, alpha=0.6, label=f"x_{j}")
    ax.set_xlabel("best response")
    ax.set_ylabel("prediction")
    ax.set_title(title)
    ax.legend(fontsize=7, markerscale=3)
    return _save(fig, path)


def violation_histogram(v, path, title=""):
    v = np.asarray(v, dtype=float)
    fig, ax = plt.subplots(figsize=(4.8, 3.2))
    positive = v[v > 0]
    if positive.size:
        ax.hist(np.log10(positive), bins=40)
        ax.set_xlabel("log10 violation (violating samples)")
    else:
        ax.text(0.5, 0.5, "no violations", ha="center", va="center", transform=ax.transAxes)
    ax.set_ylabel("count")
    ax.set_title(f"{title} ({positive.size}/{v.size} violating)")
    return _save(fig, path)


def restart_objectives(log, path, title=""):
    rows = [r for r in log if r.get("status") == "ok"]
    fig, ax = plt.subplots(figsize=(4.8, 3.2))
    if rows:
        ax.bar([r["restart"] for r in rows], [r["val_obj"] for r in rows])
    ax.set_xlabel("restart")
    ax.set_ylabel("validation objective")
    ax.set_title(title)
    return _save(fig, path)
