"""Rolling-mean line charts of a simulated trajectory, written as SVG."""

from __future__ import annotations

from pathlib import Path
from typing import List, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402


def rolling_mean(values, window: int) -> np.ndarray:
    """Mean over every complete window: ``len - window + 1`` points."""
    values = np.asarray(values, dtype=float)
    if window < 1:
        raise ValueError("window must be positive")
    if len(values) < window:
        return np.zeros(0)
    csum = np.concatenate([[0.0], np.cumsum(values)])
    return (csum[window:] - csum[:-window]) / window


def _save(fig, path: Path) -> None:
    # fixed hash salt and no date keep the SVG reproducible
    with plt.rc_context({"svg.hashsalt": "microgrid-ems"}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def emit_plots(traces: pd.DataFrame, out_dir: Union[str, Path], window_hours: int = 96) -> List[Path]:
    """Plot rolling means of generation vs demand and of every storage level."""
    if traces.empty:
        raise ValueError("no traces to plot")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    window = min(window_hours, len(traces))
    x = np.arange(len(traces) - window + 1) + window / 2.0
    written = []

    gen_cols = [c for c in traces.columns if c.endswith("_kw") and not any(
        c.endswith(s) for s in ("_available_kw", "_demand_kw", "_shed_kw", "_charge_kw", "_discharge_kw"))]
    demand_cols = [c for c in traces.columns if c.endswith("_demand_kw")]
    fig, ax = plt.subplots(figsize=(8, 3.5))
    for col in gen_cols:
        ax.plot(x, rolling_mean(traces[col], window), label=col[:-3])
    ax.plot(x, rolling_mean(traces[demand_cols].sum(axis=1), window), label="demand", color="black")
    ax.set_xlabel("hour")
    ax.set_ylabel(f"{window} h mean power [kW]")
    ax.legend(loc="upper right", fontsize="small")
    fig.tight_layout()
    path = out_dir / "generation_demand.svg"
    _save(fig, path)
    written.append(path)

    soc_cols = [c for c in traces.columns if c.endswith("_soc_kwh")]
    if soc_cols:
        fig, axes = plt.subplots(len(soc_cols), 1, figsize=(8, 2.5 * len(soc_cols)), squeeze=False)
        for ax, col in zip(axes[:, 0], soc_cols):
            series = rolling_mean(traces[col], window)
            ax.plot(x, series)
            ax.set_ylim(bottom=0.0, top=max(float(traces[col].max()), 1e-9) * 1.05)
            ax.set_ylabel(f"{col[:-8]} [kWh]")
        axes[-1, 0].set_xlabel("hour")
        fig.tight_layout()
        path = out_dir / "storage_soc.svg"
        _save(fig, path)
        written.append(path)
    return written
