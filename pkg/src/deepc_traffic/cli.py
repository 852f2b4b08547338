"""Command-line entry point: ``deepc-traffic collect | run | compare``.

Exit codes: 0 success, 1 controller failure, 2 configuration error,
3 simulator invariant breach.
"""
from __future__ import annotations

import sys
from pathlib import Path

import click

from . import harness
from .trafficsim import InvariantError

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG, EXIT_INVARIANT = 0, 1, 2, 3


def _config(path: str) -> harness.ScenarioConfig:
    try:
        return harness.load_config(path)
    except harness.ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)


@click.group()
def main() -> None:
    """DeePC traffic-light control experiments on a region-level simulator."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--amplitude", default=1.0, show_default=True,
              help="Scale of the light excitation around nominal (0 disables it).")
def collect(config_path: str, out: str, amplitude: float) -> None:
    """Offline excitation run; writes data.csv and the Hankel rank report."""
    cfg = _config(config_path)
    try:
        res = harness.collect(cfg, amplitude=amplitude)
    except harness.RunAborted as exc:
        click.echo(f"invariant breach: {exc}", err=True)
        sys.exit(EXIT_INVARIANT)
    harness.write_collect(out, cfg, res)
    r = res.rank
    click.echo(f"collected {res.u.length} samples; rank {r.rank} vs m*L+n_hat = {r.required} "
               f"({'meets' if r.exciting else 'below'} requirement, ratio {r.ratio:.3f})")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--controller", required=True, type=click.Choice(harness.CONTROLLERS))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--data", "data_dir", default=None, type=click.Path(file_okay=False),
              help="Directory written by `collect` (deepc only; collected in-process if omitted).")
def run(config_path: str, controller: str, out: str, data_dir) -> None:
    """Closed-loop run; writes trace.csv, metrics.json and controller logs."""
    cfg = _config(config_path)
    data = None
    try:
        if controller == "deepc" and data_dir is not None:
            data = harness.load_collect(data_dir, cfg)
        res = harness.run(cfg, controller, data)
    except harness.ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except harness.RunAborted as exc:
        if getattr(exc, "result", None) is not None:
            harness.write_run(out, cfg, exc.result)
        click.echo(f"run aborted: {exc}", err=True)
        sys.exit(EXIT_INVARIANT if getattr(exc, "invariant", False) else EXIT_RUNTIME)
    except InvariantError as exc:
        click.echo(f"invariant breach: {exc}", err=True)
        sys.exit(EXIT_INVARIANT)
    harness.write_run(out, cfg, res)
    m = res.metrics
    click.echo(f"{controller}: travel time {m.avg_travel_time:.2f} min, "
               f"waiting {m.avg_waiting_time:.2f} min, trips {m.completed_trips:.0f}")


@main.command()
@click.argument("runs", nargs=-1, required=True, type=click.Path(file_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--svg", is_flag=True, help="Also write density/flow/light plots.")
def compare(runs, out: str, svg: bool) -> None:
    """Tabulate runs of one scenario (markdown + CSV)."""
    try:
        report = harness.compare([Path(r) for r in runs])
    except harness.ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    harness.write_compare(out, report, runs, svg=svg)
    click.echo(report.to_markdown())


if __name__ == "__main__":
    main()
