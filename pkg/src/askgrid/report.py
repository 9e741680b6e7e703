"""Tab-separated metrics tables and the figures rendered alongside them.

Tables use fixed-precision formatting so identical inputs produce identical
bytes. Figures are drawn headless and written next to the table; they restate
the table visually (success bars, question counts, type-mix stacks) plus the
training curves for checkpoints that carry them.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

from askgrid.harness import Metrics  # noqa: E402
from askgrid.world import AskgridError  # noqa: E402

METRIC_COLUMNS = (
    "setting",
    "fold",
    "n_episodes",
    "sr",
    "pwsr",
    "nq",
    "mean_steps",
    "mean_invalid",
    "loc_share",
    "app_share",
    "dir_share",
)

# Deterministic savefig: strip the creation-date PNG chunk.
_PNG_META = {"metadata": {"Date": None}}


def metrics_row(setting: str, fold: str, metrics: Metrics) -> dict:
    loc, app, direction = metrics.qtype_mix
    return {
        "setting": setting,
        "fold": fold,
        "n_episodes": metrics.n_episodes,
        "sr": metrics.success_rate,
        "pwsr": metrics.path_weighted_sr,
        "nq": metrics.mean_questions,
        "mean_steps": metrics.mean_steps,
        "mean_invalid": metrics.mean_invalid,
        "loc_share": loc,
        "app_share": app,
        "dir_share": direction,
    }


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def format_table(rows: list[dict], columns: tuple[str, ...] = METRIC_COLUMNS) -> str:
    if not rows:
        raise AskgridError("no rows to format")
    lines = ["\t".join(columns)]
    for row in rows:
        missing = [c for c in columns if c not in row]
        if missing:
            raise AskgridError(f"row is missing columns: {missing}")
        lines.append("\t".join(_cell(row[c]) for c in columns))
    return "\n".join(lines) + "\n"


def write_table(path: str | Path, rows: list[dict], columns: tuple[str, ...] = METRIC_COLUMNS) -> Path:
    path = Path(path)
    path.write_text(format_table(rows, columns))
    return path


def read_table(path: str | Path) -> list[dict]:
    """Reads a table back as string-valued rows (header-keyed)."""
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise AskgridError(f"{path}: empty table")
    header = lines[0].split("\t")
    return [dict(zip(header, line.split("\t"), strict=True)) for line in lines[1:]]


# ==================== figures ====================


def _bar_positions(n_rows: int):
    return range(n_rows)


def success_figure(rows: list[dict], path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(1.2 + 1.1 * len(rows), 3.4))
    xs = list(_bar_positions(len(rows)))
    ax.bar([x - 0.2 for x in xs], [r["sr"] for r in rows], width=0.4, label="SR")
    ax.bar([x + 0.2 for x in xs], [r["pwsr"] for r in rows], width=0.4, label="PWSR")
    ax.set_xticks(xs, [r["setting"] for r in rows], rotation=20, ha="right")
    ax.set_ylim(0, 1)
    ax.set_ylabel("rate")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, **_PNG_META)
    plt.close(fig)
    return Path(path)


def questions_figure(rows: list[dict], path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(1.2 + 1.1 * len(rows), 3.4))
    xs = list(_bar_positions(len(rows)))
    ax.bar(xs, [r["nq"] for r in rows], width=0.55, color="#7a5195")
    ax.set_xticks(xs, [r["setting"] for r in rows], rotation=20, ha="right")
    ax.set_ylabel("questions per episode")
    fig.tight_layout()
    fig.savefig(path, **_PNG_META)
    plt.close(fig)
    return Path(path)


def qtype_figure(rows: list[dict], path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(1.2 + 1.1 * len(rows), 3.4))
    xs = list(_bar_positions(len(rows)))
    loc = [r["loc_share"] for r in rows]
    app = [r["app_share"] for r in rows]
    dr = [r["dir_share"] for r in rows]
    ax.bar(xs, loc, width=0.55, label="location")
    ax.bar(xs, app, width=0.55, bottom=loc, label="appearance")
    ax.bar(xs, dr, width=0.55, bottom=[a + b for a, b in zip(loc, app)], label="direction")
    ax.set_xticks(xs, [r["setting"] for r in rows], rotation=20, ha="right")
    ax.set_ylim(0, 1)
    ax.set_ylabel("share of asked questions")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, **_PNG_META)
    plt.close(fig)
    return Path(path)


def training_curves_figure(report: dict, path: str | Path) -> Path:
    """Loss / accuracy curves from a serialized imitation TrainReport."""
    losses = report.get("epoch_losses") or []
    if not losses:
        raise AskgridError("training report carries no epoch losses")
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 3.2))
    epochs = range(1, len(losses) + 1)
    ax1.plot(epochs, losses, marker="o", ms=3)
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("loss")
    acc = report.get("epoch_accuracy") or []
    held = report.get("heldout_accuracy") or []
    if acc:
        ax2.plot(range(1, len(acc) + 1), acc, marker="o", ms=3, label="train")
    if held and not all(h != h for h in held):  # skip all-NaN held-out tracks
        ax2.plot(range(1, len(held) + 1), held, marker="s", ms=3, label="held-out")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("teacher-forced accuracy")
    ax2.set_ylim(0, 1)
    ax2.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, **_PNG_META)
    plt.close(fig)
    return Path(path)


def rl_curves_figure(report: dict, path: str | Path) -> Path:
    """Reward / question-count traces from a serialized RLReport."""
    rows = report.get("iterations") or []
    if not rows:
        raise AskgridError("fine-tuning report carries no iterations")
    its = [r["iteration"] for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 3.2))
    ax1.plot(its, [r["mean_reward"] for r in rows])
    ax1.set_xlabel("iteration")
    ax1.set_ylabel("mean episode reward")
    ax2.plot(its, [r["mean_questions"] for r in rows], label="questions")
    ax2.plot(its, [r["success_rate"] for r in rows], label="success")
    ax2.set_xlabel("iteration")
    ax2.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, **_PNG_META)
    plt.close(fig)
    return Path(path)


def render_report(out_dir: str | Path, rows: list[dict], stem: str = "report") -> dict[str, Path]:
    """Writes the TSV plus its three companion figures; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "table": write_table(out / f"{stem}.tsv", rows),
        "success": success_figure(rows, out / f"{stem}_success.png"),
        "questions": questions_figure(rows, out / f"{stem}_questions.png"),
        "qtypes": qtype_figure(rows, out / f"{stem}_qtypes.png"),
    }
    return paths


__all__ = [
    "METRIC_COLUMNS",
    "metrics_row",
    "format_table",
    "write_table",
    "read_table",
    "success_figure",
    "questions_figure",
    "qtype_figure",
    "training_curves_figure",
    "rl_curves_figure",
    "render_report",
]
