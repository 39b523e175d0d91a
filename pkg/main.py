# main.py
# Command-line entry point: constants, simulate, estimate, mc, cache build and serve.
# Library errors carry an exit code; they are reported here and turned into the
# process exit status (0 ok, 2 config, 3 budget, 4 metadata, 5 data).

import json
import signal
import sys
from functools import wraps
from typing import Optional, Tuple

import click

from core.config import configure_logging, get_settings, load_run_config
from core.errors import SPDEError
from core.study import compute_constants, run_build_cache, run_estimate, run_mc, run_simulate


def sig_handler(signum, frame):
    click.echo("\n[main] interrupted, terminating", err=True)
    sys.exit(130)


def reports_errors(func):
    """Turn SPDEError into a message on stderr and the error's exit code."""

    @wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except SPDEError as e:
            click.echo(f"Error ({type(e).__name__}): {e}", err=True)
            sys.exit(e.exit_code)
        except OSError as e:
            click.echo(f"Filesystem error: {e}", err=True)
            sys.exit(1)

    return wrapper


config_option = click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
                             help="JSON run configuration (defaults when omitted)")
set_option = click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
                          help="Override a config key, e.g. --set model.alpha_prime=0.4 (repeatable)")
out_option = click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
                          help="Output directory (default: output_dir of the config)")


def _echo_json(data) -> None:
    click.echo(json.dumps(data, indent=2, sort_keys=True))


@click.group()
@click.option("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR (default: SPDE_LOG_LEVEL or WARNING)")
@reports_errors
def cli(log_level: Optional[str]):
    """
    Simulation and parameter estimation for linear SPDEs with damped noise.

    Examples:

        uv run main.py constants --set model.alpha_prime=0.4

        uv run main.py simulate --config run.json --out runs/one

        uv run main.py estimate --config run.json runs/one/field.json

        uv run main.py mc --config run.json --set replications=500
    """
    configure_logging(log_level)


@cli.command()
@config_option
@set_option
@click.option("--y", "point", type=float, multiple=True, help="Spatial point for the moment formulas (repeat d times)")
@reports_errors
def constants(config_path: Optional[str], overrides: Tuple[str, ...], point: Tuple[float, ...]):
    """Print K, Upsilon, Lambda and the limit increment moments for the model of the config."""
    config = load_run_config(config_path, overrides)
    tol = config.series_tol if config.series_tol is not None else get_settings().series_tol
    _echo_json(compute_constants(config.params, tol, point or None, config.scheme.n))


@cli.command()
@config_option
@set_option
@out_option
@reports_errors
def simulate(config_path: Optional[str], overrides: Tuple[str, ...], out_dir: Optional[str]):
    """Simulate one field and write it with its metadata."""
    config = load_run_config(config_path, overrides)
    path = run_simulate(config, out_dir)
    click.echo(str(path))


@cli.command()
@config_option
@set_option
@out_option
@click.argument("sample", type=click.Path(exists=True, dir_okay=False))
@reports_errors
def estimate(config_path: Optional[str], overrides: Tuple[str, ...], out_dir: Optional[str], sample: str):
    """Estimate from SAMPLE (the field .json written by simulate)."""
    config = load_run_config(config_path, overrides)
    path = run_estimate(config, sample, out_dir)
    click.echo(str(path))


@cli.command()
@config_option
@set_option
@out_option
@click.option("--workers", type=click.IntRange(min=1), default=None, help="Parallel replications (overrides the config)")
@reports_errors
def mc(config_path: Optional[str], overrides: Tuple[str, ...], out_dir: Optional[str], workers: Optional[int]):
    """Run a Monte Carlo study and write the per-replication CSV and the summary JSON."""
    config = load_run_config(config_path, overrides)
    if workers is not None:
        config = config.model_copy(update={"workers": workers})
    csv_path, summary_path, study = run_mc(config, out_dir)
    click.echo(f"{study.succeeded}/{study.replications} replications succeeded")
    click.echo(str(csv_path))
    click.echo(str(summary_path))


@cli.group()
def cache():
    """Replacement-variance caches."""


@cache.command("build")
@config_option
@set_option
@reports_errors
def cache_build(config_path: Optional[str], overrides: Tuple[str, ...]):
    """Build and persist the replacement cache of the config."""
    config = load_run_config(config_path, overrides)
    _echo_json(run_build_cache(config))


@cli.command()
def serve():
    """Start the MCP server on stdio."""
    from mcp_tools.mcp_server_spde import main as serve_main

    serve_main()


if __name__ == "__main__":
    signal.signal(signal.SIGINT, sig_handler)
    cli()
