"""Command-line entry point: ``strongwork run|verify|list-experiments``.

Exit codes: 0 when everything passes, 1 when a criterion fails, 2 on a
configuration error.
"""

from __future__ import annotations

import logging
import os
import sys

import click

from . import config as C
from .acceptance import AcceptanceContext, results_csv, run_criteria
from .experiments import EXPERIMENTS, rows_to_csv, run_experiment

WORKERS_ENV = "STRONGWORK_WORKERS"


def _default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _load(path: str, seed: int | None) -> C.ExperimentConfig:
    cfg = C.load(path)
    if seed is not None:
        cfg = cfg.with_updates(seed=seed)
        C.from_dict(C.to_dict(cfg))  # re-validate the override
    return cfg


def _emit(text: str, out: str | None, cfg: C.ExperimentConfig):
    target = out or cfg.output
    if target:
        with open(target, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose: bool):
    """Work extraction bounds for strongly coupled quantum machines."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")


@main.command("list-experiments")
def list_experiments():
    """Print the registered experiment ids."""
    for name in sorted(EXPERIMENTS):
        click.echo(name)


@main.command()
@click.argument("config_path", type=click.Path(dir_okay=False))
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--workers", type=int, default=None, help=f"Parallel sweep workers (default ${WORKERS_ENV} or 1).")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="CSV output path (default: config output or stdout).")
def run(config_path, seed, workers, out):
    """Run the experiment named in CONFIG_PATH and write long-format CSV."""
    try:
        cfg = _load(config_path, seed)
        rows = run_experiment(cfg, workers or _default_workers())
    except C.ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    _emit(rows_to_csv(rows), out, cfg)


@main.command()
@click.argument("config_path", type=click.Path(dir_okay=False))
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--workers", type=int, default=None, help="Accepted for symmetry with run; criteria run serially.")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="CSV report path (default: config output or stdout).")
def verify(config_path, seed, workers, out):
    """Evaluate the acceptance criteria selected in CONFIG_PATH."""
    try:
        cfg = _load(config_path, seed)
        results = run_criteria(AcceptanceContext.from_config(cfg), cfg.criteria)
    except C.ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    if not results:
        click.echo("warning: no criteria selected; vacuous pass", err=True)
    for r in results:
        click.echo(r.line(), err=True)
    _emit(results_csv(results), out, cfg)
    sys.exit(0 if all(r.passed for r in results) else 1)


if __name__ == "__main__":
    main()
