"""Figure specifications and rendering for simulation run directories."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


class RenderError(ValueError):
    """Missing columns, empty data or malformed run directories."""


@dataclass(frozen=True)
class PanelSpec:
    y_column: str
    y_label: str


@dataclass(frozen=True)
class FigureSpec:
    """What one scenario's figure plots and where its data comes from."""

    scenario: str
    family: str
    x_column: str
    x_label: str
    panels: tuple[PanelSpec, ...]
    series_column: str = "series"

    @property
    def columns(self) -> list[str]:
        return [self.series_column, self.x_column] + [p.y_column for p in self.panels]


FIGURE_SPECS = {
    "ledger-convergence": FigureSpec(
        scenario="ledger-convergence",
        family="tips",
        x_column="round",
        x_label="approval round",
        panels=(PanelSpec("tips_total", "tip count"),),
    ),
    "dc-ledger": FigureSpec(
        scenario="dc-ledger",
        family="ledger",
        x_column="round",
        x_label="transaction round",
        panels=(PanelSpec("assortativity", "style assortativity"),),
    ),
    "verification-loss": FigureSpec(
        scenario="verification-loss",
        family="verification",
        x_column="run",
        x_label="seeded run",
        panels=(
            PanelSpec("gap", "test gap"),
            PanelSpec("loss", "verification loss"),
        ),
    ),
    "adaptive-adl": FigureSpec(
        scenario="adaptive-adl",
        family="learning",
        x_column="round",
        x_label="round",
        panels=(
            PanelSpec("global_loss", "global model loss"),
            PanelSpec("global_gap", "test gap"),
            PanelSpec("bandwidth_mb_cum", "bandwidth (MB)"),
        ),
    ),
    "freshness": FigureSpec(
        scenario="freshness",
        family="learning",
        x_column="round",
        x_label="round",
        panels=(PanelSpec("global_loss", "global model loss"),),
    ),
    "style-participation": FigureSpec(
        scenario="style-participation",
        family="learning",
        x_column="round",
        x_label="round",
        panels=(PanelSpec("pop_loss", "population loss"),),
    ),
    "attack": FigureSpec(
        scenario="attack",
        family="learning",
        x_column="round",
        x_label="round",
        panels=(PanelSpec("global_loss", "global model loss"),),
    ),
}


@dataclass
class RunData:
    scenario: str
    spec: FigureSpec
    header: list[str]
    rows: list[dict] = field(default_factory=list)


def load_run(run_dir) -> RunData:
    """Read a run's manifest and the CSV family its figure is drawn from."""
    run_dir = Path(run_dir)
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.exists():
        raise RenderError(f"no manifest.json in {run_dir}")
    manifest = json.loads(manifest_path.read_text())
    scenario = manifest.get("scenario")
    if scenario not in FIGURE_SPECS:
        raise RenderError(f"no figure defined for scenario {scenario!r}")
    spec = FIGURE_SPECS[scenario]
    families = manifest.get("families", {})
    if spec.family not in families:
        raise RenderError(f"run has no {spec.family!r} table")
    csv_path = run_dir / families[spec.family]["file"]
    with csv_path.open() as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in spec.columns if c not in header]
        if missing:
            raise RenderError(f"{csv_path.name} is missing column(s) {missing}")
        rows = list(reader)
    if not rows:
        raise RenderError(f"{csv_path.name} holds no data rows, nothing to plot")
    return RunData(scenario=scenario, spec=spec, header=header, rows=rows)


def plotted_table(data: RunData) -> list[list[str]]:
    """The exact table the figure plots: spec columns, source rows in order."""
    cols = data.spec.columns
    return [cols] + [[row[c] for c in cols] for row in data.rows]


def write_dry_run(data: RunData, outdir) -> Path:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / f"{data.scenario}-data.csv"
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerows(plotted_table(data))
    return path


def _series_groups(data: RunData) -> dict[str, list[dict]]:
    groups: dict[str, list[dict]] = {}
    for row in data.rows:
        groups.setdefault(row[data.spec.series_column], []).append(row)
    return groups


def render(data: RunData, outdir) -> Path:
    """Draw the scenario figure, one panel per metric, one line per series."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    spec = data.spec
    groups = _series_groups(data)
    n_panels = len(spec.panels)
    fig, axes = plt.subplots(
        1, n_panels, figsize=(5.0 * n_panels, 3.6), squeeze=False
    )
    for ax, panel in zip(axes[0], spec.panels):
        for name in groups:
            rows = groups[name]
            xs = [float(r[spec.x_column]) for r in rows]
            ys = [float(r[panel.y_column]) for r in rows]
            ax.plot(xs, ys, label=name, linewidth=1.2)
        ax.set_xlabel(spec.x_label)
        ax.set_ylabel(panel.y_label)
        ax.grid(True, alpha=0.3)
    axes[0][0].legend(fontsize=8)
    fig.suptitle(spec.scenario)
    fig.tight_layout()
    path = outdir / f"{spec.scenario}.png"
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path
