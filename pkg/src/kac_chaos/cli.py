"""Command-line interface: one subcommand per experiment.

Example:
    kac-chaos chaos-rate --n 64,128,256 --t 5,10,50 --replicas 200 \
        --f0 gaussian:1.0 --seed 42 --out results.csv --json

A JSON config file with the same keys can be passed via --config;
explicit flags override file values.  Exit codes: 0 success, 2
configuration error, 3 threshold failure when --check is given.
"""

from __future__ import annotations

import json
import pathlib
import sys

import click

from kac_chaos.experiments import (
    EXPERIMENTS,
    ConfigError,
    ExperimentConfig,
    result_csv,
    result_json,
    run_experiment,
)


def _parse_list(text, cast):
    return [cast(x) for x in str(text).split(",") if x != ""]


_OPTIONS = [
    click.option("--n", "n_list", default=None, help="comma-separated system sizes, e.g. 64,128,256"),
    click.option("--t", "t_grid", default=None, help="comma-separated observation times, e.g. 0,1,5,10"),
    click.option("--replicas", type=int, default=None, help="independent replicas per cell"),
    click.option("--f0", default=None, help="initial law: gaussian:E | uniform:a,b | student:p"),
    click.option("--p-init", "p_init", type=float, default=None, help="moment order of the f0 scenario"),
    click.option("--seed", type=int, default=None, help="master seed"),
    click.option("--n-ref", "n_ref", type=int, default=None, help="reference-flow population size"),
    click.option("--param", type=click.Choice(["rotation", "polar"]), default=None, help="collision parametrization"),
    click.option("--q", type=float, default=None, help="Wasserstein order for iid-rate"),
    click.option("--n-system", "n_system", type=int, default=None, help="system size N for the decoupling experiment"),
    click.option("--out", "output", type=click.Path(dir_okay=False), default=None, help="CSV output path (default: stdout)"),
    click.option("--json", "json_output", is_flag=True, default=False, help="also emit a JSON mirror with fits and rates"),
    click.option("--check", is_flag=True, default=False, help="exit 3 unless the experiment's acceptance checks pass"),
    click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None, help="JSON config file; flags override"),
]


def _add_options(fn):
    for option in reversed(_OPTIONS):
        fn = option(fn)
    return fn


def _build_config(experiment: str, config_path, **flags) -> ExperimentConfig:
    values = {}
    if config_path:
        with open(config_path) as fh:
            try:
                values.update(json.load(fh))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"invalid JSON config: {exc}") from exc
    for key, val in flags.items():
        if val is not None and not (key in ("json_output", "check") and val is False):
            values[key] = val
    values["experiment"] = experiment
    if "n_list" in values and isinstance(values["n_list"], str):
        values["n_list"] = _parse_list(values["n_list"], int)
    if "t_grid" in values and isinstance(values["t_grid"], str):
        values["t_grid"] = _parse_list(values["t_grid"], float)
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    config = ExperimentConfig(**values)
    config.validate()
    return config


def _emit(result, config: ExperimentConfig) -> None:
    csv_text = result_csv(result)
    if config.output:
        pathlib.Path(config.output).write_text(csv_text)
    else:
        click.echo(csv_text, nl=False)
    if config.json_output:
        json_text = result_json(result, config)
        if config.output:
            pathlib.Path(config.output).with_suffix(".json").write_text(json_text)
        else:
            click.echo(json_text, nl=False)
    for name, ok, message in result.checks:
        click.echo(f"[{'PASS' if ok else 'FAIL'}] {name}: {message}", err=True)


@click.group()
def main():
    """Monte Carlo experiments for the Kac particle system."""


def _make_command(experiment: str):
    @main.command(name=experiment)
    @_add_options
    def command(config_path, **flags):
        try:
            config = _build_config(experiment, config_path, **flags)
            result = run_experiment(config)
        except ConfigError as exc:
            click.echo(f"configuration error: {exc}", err=True)
            sys.exit(2)
        _emit(result, config)
        if config.check and not result.passed:
            sys.exit(3)

    command.__doc__ = f"Run the {experiment} experiment."
    return command


for _experiment in EXPERIMENTS:
    _make_command(_experiment)


if __name__ == "__main__":
    main()
