"""Static figures for the ``report`` command."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# fixed metadata keeps the PNG bytes reproducible
_META = {"Software": None}


def plot_rule_counts(counts: Sequence[Sequence[int]], path: Path, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(5, 3))
    if counts:
        ticks, n = zip(*counts)
        ax.step(ticks, n, where="post", marker="o", ms=3)
    ax.set_xlabel("tick")
    ax.set_ylabel("rules")
    ax.set_title(f"{title} rule count".strip())
    fig.tight_layout()
    fig.savefig(path, metadata=_META)
    plt.close(fig)
    return path


def plot_priorities(rows: Sequence[dict], path: Path, title: str = "", top: int = 20) -> Path:
    rows = [r for r in rows if r["priority"] > 0][:top]
    fig, ax = plt.subplots(figsize=(5, max(2.0, 0.3 * len(rows) + 1)))
    if rows:
        labels = ["{" + ",".join(r.get("names") or map(str, r["group"])) + "}" for r in rows]
        ax.barh(range(len(rows)), [r["priority"] for r in rows])
        ax.set_yticks(range(len(rows)))
        ax.set_yticklabels(labels)
        ax.invert_yaxis()
    else:
        ax.text(0.5, 0.5, "no valenced groups", ha="center", va="center", transform=ax.transAxes)
    ax.set_xlabel("priority")
    ax.set_title(f"{title} priorities".strip())
    fig.tight_layout()
    fig.savefig(path, metadata=_META)
    plt.close(fig)
    return path
