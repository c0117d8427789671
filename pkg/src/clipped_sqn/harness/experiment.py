"""Multi-seed comparison runs with CSV traces, an aggregate table and a plot.

Every (algorithm, seed) run owns its random streams, so results do not
depend on run order.  When an algorithm has a ``grid`` of step values the
value with the lowest final loss on the first seed is used for all seeds.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .. import objectives
from ..baselines import run_baseline
from ..objectives import Dataset
from ..optimizer import RunTrace, _num, run
from ..rng import stream
from .config import CLIPPED_SQN, DISPLAY_NAMES, AlgorithmSpec, ExperimentConfig, build_run_config, serialize_config
from .plot import AxesSpec, PlotSeries, emit_plot

log = logging.getLogger(__name__)

AGGREGATE_COLUMNS = ("algorithm", "samples", "mean_loss", "std_loss", "runs")
CHECKPOINTS = 50

SDLBFGS_NOTE = (
    "SdLBFGS is run as mini-batch gradients preconditioned by this package's damped "
    "L-BFGS with fixed weight w = 1, fixed damping threshold q and stepsize lr / sqrt(1 + k); "
    "this is an interpretation, not a reference implementation."
)


# ---------------------------------------------------------------------------
# data and starting points


def make_dataset(cfg: ExperimentConfig) -> Dataset:
    d = cfg.data
    if d.source == "file":
        return objectives.load_dataset(d.path)
    return objectives.generate_synthetic(d.d, d.n, d.sparsity, cfg.label_mode, seed=d.seed)


def initial_point(cfg: ExperimentConfig, dimension: int, seed: int) -> np.ndarray:
    """Standard normal or uniform on [-1, 1]^d, drawn from the seed's init stream."""
    rng = stream(seed, "init")
    if cfg.init_mode == "normal":
        return rng.standard_normal(dimension)
    return rng.uniform(-1.0, 1.0, dimension)


# ---------------------------------------------------------------------------
# single runs and curves


def run_single(cfg: ExperimentConfig, spec: AlgorithmSpec, dataset: Dataset, seed: int) -> RunTrace:
    """One run; numerical failures come back as an aborted trace instead of raising."""
    run_cfg = build_run_config(cfg, spec, seed)
    x0 = initial_point(cfg, dataset.dimension, seed)
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            if spec.name == CLIPPED_SQN:
                return run(run_cfg, dataset, cfg.objective, x0)
            return run_baseline(run_cfg, dataset, cfg.objective, x0)
    except (FloatingPointError, OverflowError, np.linalg.LinAlgError) as exc:
        return RunTrace(aborted=f"{type(exc).__name__}: {exc}")


def loss_curve(trace: RunTrace) -> tuple[np.ndarray, np.ndarray]:
    """``(samples spent to reach x_k, F(x_k))`` pairs, ending at the final iterate."""
    xs, ys = [], []
    spent = 0
    for rec in trace.records:
        xs.append(spent)
        ys.append(rec.loss)
        spent = rec.samples_consumed
    if trace.final_loss is not None:
        xs.append(trace.final_samples)
        ys.append(trace.final_loss)
    return np.asarray(xs, dtype=np.int64), np.asarray(ys, dtype=np.float64)


def loss_at(samples: np.ndarray, losses: np.ndarray, checkpoints) -> np.ndarray:
    """Loss of the last iterate reached within each sample budget (nan before the first)."""
    idx = np.searchsorted(samples, np.asarray(checkpoints), side="right") - 1
    out = np.full(len(idx), np.nan)
    ok = idx >= 0
    out[ok] = losses[idx[ok]]
    return out


def _final(trace: RunTrace) -> float:
    if trace.aborted is not None or trace.final_loss is None:
        return math.nan
    return float(trace.final_loss)


# ---------------------------------------------------------------------------
# report


@dataclass
class AlgorithmSummary:
    name: str
    display_name: str
    step_key: str
    step_value: float
    final_losses: list[float]
    final_samples: list[int]
    tuning: dict[float, float] = field(default_factory=dict)
    aborted: list[tuple[int, str]] = field(default_factory=list)

    @property
    def mean_final(self) -> float:
        return float(np.mean(self.final_losses)) if self.final_losses else math.nan

    @property
    def std_final(self) -> float:
        if len(self.final_losses) < 2:
            return 0.0
        return float(np.std(self.final_losses, ddof=1))


@dataclass
class ComparisonReport:
    config: ExperimentConfig
    summaries: list[AlgorithmSummary]
    checkpoints: np.ndarray
    curves: dict[str, tuple[np.ndarray, np.ndarray]]
    traces: dict[tuple[str, int], RunTrace] = field(default_factory=dict)
    files: list[str] = field(default_factory=list)
    budget_spread: int = 0

    @property
    def ranking(self) -> list[str]:
        """Algorithm names by mean final loss; runs with aborts or nan sort last."""
        def key(s: AlgorithmSummary):
            m = s.mean_final
            return (0, m) if math.isfinite(m) else (1, 0.0)

        return [s.name for s in sorted(self.summaries, key=key)]

    @property
    def any_aborted(self) -> bool:
        return any(s.aborted for s in self.summaries)

    def summary(self, name: str) -> AlgorithmSummary:
        for s in self.summaries:
            if s.name == name:
                return s
        raise KeyError(name)

    def header(self) -> str:
        lines = [
            "# comparison report",
            f"# objective: {self.config.objective.value}",
            f"# seeds: {', '.join(str(s) for s in self.config.seeds)}",
            f"# note: {SDLBFGS_NOTE}",
            "# resolved config:",
        ]
        lines += ["#   " + ln if ln else "#" for ln in serialize_config(self.config).rstrip().splitlines()]
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        out = [self.header(), ""]
        out.append(f"{'algorithm':<16}{'step':>14}{'mean final':>14}{'std':>12}{'samples':>10}  aborted")
        for s in self.summaries:
            step = f"{s.step_key}={s.step_value:g}"
            samples = max(s.final_samples) if s.final_samples else 0
            out.append(
                f"{s.display_name:<16}{step:>14}{s.mean_final:>14.8f}{s.std_final:>12.2e}{samples:>10}  {len(s.aborted)}"
            )
        out.append("")
        out.append("ranking (lowest mean final loss first): " + " < ".join(self.summary(n).display_name for n in self.ranking))
        for s in self.summaries:
            if s.tuning:
                grid = ", ".join(f"{v:g}: {loss:.6g}" for v, loss in s.tuning.items())
                out.append(f"tuning {s.display_name} {s.step_key} on seed {self.config.seeds[0]}: {grid}")
            for seed, msg in s.aborted:
                out.append(f"aborted {s.display_name} seed {seed}: {msg}")
        if self.config.comparison:
            out.append(f"final sample counts differ by at most {self.budget_spread}")
        return "\n".join(out) + "\n"

    def aggregate_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(AGGREGATE_COLUMNS)
        for s in self.summaries:
            mean, std = self.curves[s.name]
            runs = len(s.final_losses)
            for c, m, sd in zip(self.checkpoints, mean, std):
                w.writerow([s.name, _num(int(c)), _num(m), _num(sd), runs])
        return buf.getvalue()

    def plot(self) -> str:
        return plot_curves(
            [(s.display_name, self.checkpoints, self.curves[s.name][0]) for s in self.summaries],
            title=f"{self.config.objective.value}: mean training loss over {len(self.config.seeds)} seeds",
        )


def plot_curves(curves, title: str = "") -> str:
    """SVG from ``(label, samples, losses)`` triples; log-y when every value is positive."""
    series = []
    for label, xs, ys in curves:
        xs, ys = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
        ok = np.isfinite(ys)
        series.append(PlotSeries(label, xs[ok].tolist(), ys[ok].tolist()))
    log_y = all(s.ys and min(s.ys) > 0 for s in series)
    return emit_plot(series, AxesSpec(title=title, x_label="cumulative samples", log_y=log_y))


# ---------------------------------------------------------------------------
# driver


def tune_step(cfg: ExperimentConfig, spec: AlgorithmSpec, dataset: Dataset) -> tuple[AlgorithmSpec, dict[float, float]]:
    """Pick the grid value with the lowest final loss on the first seed."""
    if len(spec.grid) < 2:
        return (spec.with_step(spec.grid[0]) if spec.grid else spec), {}
    scores = {}
    for value in spec.grid:
        loss = _final(run_single(cfg, spec.with_step(value), dataset, cfg.seeds[0]))
        scores[float(value)] = loss
    finite = {v: s for v, s in scores.items() if math.isfinite(s)}
    if not finite:
        log.warning("%s: every grid value diverged; keeping %s", spec.name, spec.params[spec.step_key])
        return spec, scores
    best = min(finite, key=finite.get)
    return spec.with_step(best), scores


def _checkpoints(cfg: ExperimentConfig, traces) -> np.ndarray:
    if cfg.max_samples is not None:
        top = cfg.max_samples
    else:
        top = max((t.final_samples for t in traces), default=0)
    return np.unique(np.linspace(0, top, CHECKPOINTS + 1).astype(np.int64))


def run_experiment(
    cfg: ExperimentConfig,
    out_dir: str | os.PathLike | None = None,
    dataset: Dataset | None = None,
    write: bool = True,
) -> ComparisonReport:
    """Run the roster over all seeds and write traces, aggregate CSV, report and plot."""
    dataset = dataset if dataset is not None else make_dataset(cfg)
    out_dir = os.fspath(out_dir if out_dir is not None else cfg.output_dir)

    summaries, traces = [], {}
    for spec in cfg.roster:
        chosen, tuning = tune_step(cfg, spec, dataset)
        summary = AlgorithmSummary(
            name=spec.name,
            display_name=spec.display_name,
            step_key=spec.step_key,
            step_value=float(chosen.params[spec.step_key]),
            final_losses=[],
            final_samples=[],
            tuning=tuning,
        )
        for seed in cfg.seeds:
            trace = run_single(cfg, chosen, dataset, seed)
            traces[(spec.name, seed)] = trace
            summary.final_losses.append(_final(trace))
            summary.final_samples.append(trace.final_samples)
            if trace.aborted is not None:
                summary.aborted.append((seed, trace.aborted))
                log.error("%s seed %d aborted: %s", spec.name, seed, trace.aborted)
        summaries.append(summary)

    checkpoints = _checkpoints(cfg, traces.values())
    curves = {}
    for s in summaries:
        rows = np.array([loss_at(*loss_curve(traces[(s.name, seed)]), checkpoints) for seed in cfg.seeds])
        with np.errstate(invalid="ignore"):
            mean = rows.mean(axis=0)
            std = rows.std(axis=0, ddof=1) if len(cfg.seeds) > 1 else np.zeros(len(checkpoints))
        curves[s.name] = (mean, std)

    finals = [t.final_samples for t in traces.values() if t.aborted is None]
    spread = max(finals) - min(finals) if finals else 0
    report = ComparisonReport(cfg, summaries, checkpoints, curves, traces, budget_spread=spread)

    if write:
        _write_outputs(report, out_dir)
    return report


def trace_filename(name: str, seed: int) -> str:
    return f"{name}_seed{seed}.csv"


def _write(path: str, text: str, files: list[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    files.append(path)


def _write_outputs(report: ComparisonReport, out_dir: str) -> None:
    cfg = report.config
    runs_dir = os.path.join(out_dir, "runs")
    os.makedirs(runs_dir, exist_ok=True)
    files = report.files
    for (name, seed), trace in report.traces.items():
        _write(os.path.join(runs_dir, trace_filename(name, seed)), trace.to_csv(), files)
    _write(os.path.join(out_dir, "aggregate.csv"), report.aggregate_csv(), files)
    _write(os.path.join(out_dir, "report.txt"), report.to_text(), files)
    _write(os.path.join(out_dir, "config.ini"), serialize_config(cfg), files)
    try:
        svg = report.plot()
    except ValueError as exc:
        log.error("plot skipped: %s", exc)
    else:
        _write(os.path.join(out_dir, "loss_vs_samples.svg"), svg, files)


# ---------------------------------------------------------------------------
# re-plotting from written traces


def read_trace_csv(path: str | os.PathLike) -> tuple[np.ndarray, np.ndarray]:
    """``(samples spent to reach x_k, loss)`` from a per-run CSV."""
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    losses = np.array([float(r["loss"]) for r in rows])
    spent = np.concatenate([[0], [int(r["samples"]) for r in rows[:-1]]]).astype(np.int64)
    return spent, losses


def replot(out_dir: str | os.PathLike, roster: list[str] | None = None, title: str = "") -> str:
    """Rebuild the mean-loss plot from the CSVs under ``out_dir/runs``."""
    runs_dir = os.path.join(os.fspath(out_dir), "runs")
    groups: dict[str, list[str]] = {}
    for fname in sorted(os.listdir(runs_dir)):
        if fname.endswith(".csv") and "_seed" in fname:
            groups.setdefault(fname.rsplit("_seed", 1)[0], []).append(os.path.join(runs_dir, fname))
    if not groups:
        raise ValueError(f"no run traces found in {runs_dir}")
    names = [n for n in (roster or []) if n in groups] + sorted(n for n in groups if n not in (roster or []))
    curves_in = {n: [read_trace_csv(p) for p in groups[n]] for n in names}
    top = max(int(x[-1]) for runs in curves_in.values() for x, _ in runs)
    checkpoints = np.unique(np.linspace(0, top, CHECKPOINTS + 1).astype(np.int64))
    curves = []
    for n in names:
        rows = np.array([loss_at(x, y, checkpoints) for x, y in curves_in[n]])
        curves.append((DISPLAY_NAMES.get(n, n), checkpoints, rows.mean(axis=0)))
    return plot_curves(curves, title=title)
