import os
import sys

import click

from .runner import list_scenarios, run, selftest


@click.group()
def main_cli():
    pass


@main_cli.command(name="run", help="Run a scenario config and write CSV files")
@click.argument("config", type=click.Path(dir_okay=False))
@click.option(
    "--out",
    "out_dir",
    help="Directory where result files are saved")
@click.option(
    "--jobs",
    type=int,
    help="Worker processes (default: available CPUs)",
    envvar="RSMA_JOBS")
@click.option(
    "--seed",
    type=int,
    help="Override the base seed of the scenario",
    envvar="RSMA_SEED")
def run_command(config, out_dir, jobs, seed):
    if jobs is None:
        jobs = os.cpu_count() or 1
    sys.exit(run(config, out_dir=out_dir, jobs=jobs, seed=seed))


@main_cli.command(name="list", help="List available scenario kinds")
def list_kinds():
    list_scenarios()


@main_cli.command(name="selftest", help="Run quick invariant checks")
def run_selftest():
    sys.exit(selftest())


def main():
    main_cli()
