"""Cross-run reporting: merge per-run metrics into a baseline-versus-regularized
comparison table and render the training curves to figure files.

A "run directory" is whatever ``train`` wrote: ``summary.json`` plus
``metrics.csv``. Directories are searched recursively, so a parent holding
one subdirectory per seed works as a single argument.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

from .training import MetricsRecord, read_metrics_csv

COMPARISON_FIELDS = (
    "seed",
    "accuracy_baseline",
    "accuracy_mier",
    "entropy_baseline",
    "entropy_mier",
    "bound_baseline",
    "bound_mier",
)


@dataclass
class RunRecord:
    path: Path
    seed: int
    mier_enabled: bool
    final: dict
    history: list[MetricsRecord]

    @property
    def arm(self) -> str:
        return "mier" if self.mier_enabled else "baseline"


def discover_runs(directories) -> list[RunRecord]:
    """Collect every run below the given directories, sorted by (arm, seed)."""
    runs: list[RunRecord] = []
    for directory in directories:
        directory = Path(directory)
        if not directory.exists():
            raise FileNotFoundError(f"run directory {directory} does not exist")
        for summary_path in sorted(directory.rglob("summary.json")):
            summary = json.loads(summary_path.read_text())
            metrics_path = summary_path.parent / "metrics.csv"
            history = (
                read_metrics_csv(metrics_path) if metrics_path.exists() else []
            )
            runs.append(RunRecord(
                path=summary_path.parent,
                seed=int(summary["seed"]),
                mier_enabled=bool(summary["mier_enabled"]),
                final=summary["final"],
                history=history,
            ))
    if not runs:
        raise FileNotFoundError(
            "no runs found (expected summary.json under the given directories)"
        )
    return sorted(runs, key=lambda r: (r.arm, r.seed))


def _median(values: list[float]) -> float | None:
    if not values:
        return None
    ordered = sorted(values)
    mid = len(ordered) // 2
    if len(ordered) % 2:
        return ordered[mid]
    return 0.5 * (ordered[mid - 1] + ordered[mid])


def build_comparison(runs: list[RunRecord]) -> list[dict]:
    """One row per seed with both arms side by side, plus a medians row."""
    by_key = {(r.seed, r.arm): r for r in runs}
    seeds = sorted({r.seed for r in runs})
    rows: list[dict] = []
    for seed in seeds:
        row: dict = {"seed": seed}
        for arm in ("baseline", "mier"):
            run = by_key.get((seed, arm))
            row[f"accuracy_{arm}"] = (
                run.final["test_accuracy"] if run else None
            )
            row[f"entropy_{arm}"] = (
                run.final["mean_classifier_entropy"] if run else None
            )
            row[f"bound_{arm}"] = run.final["elbo_bound"] if run else None
        rows.append(row)
    medians: dict = {"seed": "median"}
    for column in COMPARISON_FIELDS[1:]:
        medians[column] = _median(
            [row[column] for row in rows if row[column] is not None]
        )
    rows.append(medians)
    return rows


def write_comparison_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(COMPARISON_FIELDS)
        for row in rows:
            writer.writerow([
                row["seed"],
                *(
                    "" if row[column] is None else repr(float(row[column]))
                    for column in COMPARISON_FIELDS[1:]
                ),
            ])


def format_table(rows: list[dict]) -> str:
    """Fixed-width text rendering of the comparison table."""
    header = [name.replace("_", " ") for name in COMPARISON_FIELDS]
    body = []
    for row in rows:
        body.append([str(row["seed"])] + [
            "-" if row[column] is None else f"{row[column]:.4f}"
            for column in COMPARISON_FIELDS[1:]
        ])
    widths = [
        max(len(header[i]), *(len(line[i]) for line in body))
        for i in range(len(header))
    ]
    lines = [
        "  ".join(header[i].ljust(widths[i]) for i in range(len(header))),
        "  ".join("-" * w for w in widths),
    ]
    for line in body:
        lines.append("  ".join(line[i].ljust(widths[i]) for i in range(len(line))))
    return "\n".join(lines)


def render_figures(runs: list[RunRecord], out_dir) -> list[Path]:
    """Accuracy and entropy training curves, one PNG each, plus a final-value
    scatter; baseline runs draw dashed, regularized runs solid."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    curve_specs = (
        ("test_accuracy", "accuracy", "accuracy_curves.png"),
        ("mean_classifier_entropy", "mean classifier entropy (nats)",
         "entropy_curves.png"),
    )
    styles = {"baseline": {"linestyle": "--", "color": "tab:blue"},
              "mier": {"linestyle": "-", "color": "tab:orange"}}
    for field_name, label, filename in curve_specs:
        fig, ax = plt.subplots(figsize=(7, 4.5))
        for run in runs:
            if not run.history:
                continue
            epochs = [r.epoch for r in run.history]
            values = [getattr(r, field_name) for r in run.history]
            ax.plot(epochs, values, alpha=0.75,
                    label=f"{run.arm} seed {run.seed}", **styles[run.arm])
        ax.set_xlabel("epoch")
        ax.set_ylabel(label)
        ax.legend(fontsize=7, ncol=2)
        ax.grid(alpha=0.3)
        fig.tight_layout()
        path = out_dir / filename
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

    fig, ax = plt.subplots(figsize=(5, 4.5))
    for run in runs:
        ax.scatter(run.final["mean_classifier_entropy"],
                   run.final["test_accuracy"],
                   color=styles[run.arm]["color"],
                   marker="o" if run.mier_enabled else "x",
                   label=f"{run.arm} seed {run.seed}")
    ax.set_xlabel("final mean classifier entropy (nats)")
    ax.set_ylabel("final test accuracy")
    ax.legend(fontsize=7)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    path = out_dir / "final_accuracy_vs_entropy.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)
    return written
