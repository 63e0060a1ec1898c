"""Matplotlib figures for cleaning, label and evaluation reports.

All functions draw onto a fresh figure, save it to ``path`` and close it, so
they are safe to call from batch jobs without a display.
"""
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "font.size": 10,
    "axes.titlesize": 11,
    "axes.labelsize": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
    # stable output: no embedded creation dates or random hatch ids
    "svg.hashsalt": "course_sdg",
}


def _save(fig, path):
    metadata = {"Software": None} if str(path).endswith(".png") else None
    fig.savefig(path, metadata=metadata)
    plt.close(fig)
    return path


def plot_degree_distribution(rows, path, title="Courses per degree"):
    """Horizontal bars of ``(degree, count)`` rows, largest on top."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(7, 0.35 * max(len(rows), 3) + 1))
        labels = [d for d, _ in rows][::-1]
        counts = [c for _, c in rows][::-1]
        ax.barh(labels, counts, color="#4c72b0")
        ax.set_xlabel("Number of courses")
        ax.set_title(title)
        return _save(fig, path)


def plot_label_distribution(rows, path, title="SDG mentions in training data"):
    """Bar chart of per-goal percentages from ``(goal, count, percent)`` rows."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(8, 3.5))
        goals = [g for g, _, _ in rows]
        pct = [p for _, _, p in rows]
        ax.bar([str(g) for g in goals], pct, color="#55a868")
        ax.set_xlabel("SDG")
        ax.set_ylabel("Share of mentions (%)")
        ax.set_title(title)
        return _save(fig, path)


def plot_per_goal_f1(reports, path, title="F1 by SDG for each model"):
    """Grouped bars: one group per goal, one bar per model report."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(10, 4))
        goals = [r.goal for r in reports[0].per_goal] if reports else []
        x = np.arange(len(goals))
        width = 0.8 / max(len(reports), 1)
        for i, rep in enumerate(reports):
            f1 = {r.goal: r.f1 for r in rep.per_goal}
            ax.bar(x + i * width, [f1.get(g, 0.0) for g in goals], width, label=rep.model_name)
        ax.set_xticks(x + width * (len(reports) - 1) / 2)
        ax.set_xticklabels([str(g) for g in goals])
        ax.set_ylim(0, 1)
        ax.set_xlabel("SDG")
        ax.set_ylabel("F1")
        ax.set_title(title)
        if reports:
            ax.legend(fontsize=8, ncol=min(len(reports), 5))
        return _save(fig, path)


def plot_model_comparison(ranked, path, title="Micro scores by model"):
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(7, 3.5))
        names = [r.model_name for r in ranked]
        x = np.arange(len(names))
        for i, (attr, label) in enumerate(
            [("micro_precision", "Precision"), ("micro_recall", "Recall"), ("micro_f1", "F1")]
        ):
            ax.bar(x + (i - 1) * 0.25, [getattr(r, attr) for r in ranked], 0.25, label=label)
        ax.set_xticks(x)
        ax.set_xticklabels(names, rotation=20)
        ax.set_ylim(0, 1)
        ax.legend(fontsize=8)
        ax.set_title(title)
        return _save(fig, path)
