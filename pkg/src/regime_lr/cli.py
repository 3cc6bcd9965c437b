"""Command-line front end: ``regime-lr simulate | estimate | test | mc``.

Exit codes: 0 success, 2 input or configuration error, 3 numerical failure.
"""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path
from typing import Any

import click
import numpy as np

from regime_lr import __version__
from regime_lr._rng import RNG_ALGORITHM
from regime_lr.armle import fit_ar
from regime_lr.config import RunConfig, load_run_config, override, validate
from regime_lr.errors import InputError, NumericalError
from regime_lr.estimation import AlphaGrid, best_fit, profile_alpha
from regime_lr.lrtest import SCHEMA_VERSION, default_threads, lr_from_fits, run_test
from regime_lr.mixture import MixtureSpec
from regime_lr.montecarlo import PRESETS, StudyFailure, run_study, simulate_dgp

EXIT_INPUT = 2
EXIT_NUMERICAL = 3

_SECTION_OF_KIND = {"simulate": "simulate", "estimate": "estimate", "lr_test": "test", "size": "mc", "power": "mc"}


def _clean(obj: Any) -> Any:
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


def write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(payload), indent=2, allow_nan=False) + "\n")


def read_series(path: str | Path) -> np.ndarray:
    """Headerless single-column CSV of floats, one per line."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise InputError(f"cannot read data file {path}: {exc}") from exc
    values = []
    for i, line in enumerate(lines, 1):
        line = line.strip()
        if not line:
            continue
        try:
            values.append(float(line))
        except ValueError:
            raise InputError(f"{path}:{i}: expected one number per line, got {line!r}") from None
    y = np.array(values, dtype=np.float64)
    if y.size == 0:
        raise InputError(f"{path} holds no data")
    if not np.all(np.isfinite(y)):
        raise InputError(f"{path} contains non-finite values")
    return y


def _load_config(path: str | None) -> RunConfig:
    """Accept a run configuration, or an output file whose embedded config is reused."""
    if path is not None and Path(path).suffix.lower() == ".json":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, ValueError) as exc:
            raise InputError(f"cannot read config {path}: {exc}") from exc
        if isinstance(data, dict) and "schema_version" in data and "config" in data:
            section = _SECTION_OF_KIND.get(data.get("kind"))
            if section is None:
                raise InputError(f"{path} is an output file of unknown kind {data.get('kind')!r}")
            return validate(RunConfig, {section: data["config"]})
    return load_run_config(path)


def _model_overrides(family, p, m, grid_file, block):
    spec_family = family or block.model.family
    spec_p = p or block.model.p
    spec_m = m or block.model.m
    grid = None
    if grid_file is not None:
        spec = MixtureSpec(spec_family, spec_p, spec_m)
        grid = AlphaGrid.from_file(grid_file, spec).to_list()
    return {"model.family": family, "model.p": p, "model.m": m, "model.grid": grid}


def _spec_and_grid(model) -> tuple[MixtureSpec, AlphaGrid]:
    spec = MixtureSpec(model.family, model.p, model.m)
    grid = AlphaGrid(spec.family, tuple(model.grid)) if model.grid else AlphaGrid.default(spec)
    return spec, grid.check(spec)


def _header(kind: str, seed: int, config) -> dict[str, Any]:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "package_version": __version__,
        "rng": RNG_ALGORITHM,
        "seed": seed,
        "config": config.model_dump(mode="json"),
    }


class _Group(click.Group):
    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except InputError as exc:
            click.echo(f"error: {exc}", err=True)
            ctx.exit(EXIT_INPUT)
        except NumericalError as exc:
            click.echo(f"numerical failure: {exc}", err=True)
            ctx.exit(EXIT_NUMERICAL)


_family = click.option("--family", type=click.Choice(["lmar", "gmar"], case_sensitive=False), default=None)
_p = click.option("--p", "p", type=click.IntRange(1, 12), default=None, help="Autoregressive order.")
_m = click.option("--m", "m", type=click.IntRange(1, 12), default=None, help="LMAR logistic order.")
_seed = click.option("--seed", type=click.IntRange(0, 2**63 - 1), default=None)
_config = click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None)
_threads = click.option("--threads", type=click.IntRange(1, 1024), default=None, help="Worker cap (env REGIME_LR_THREADS).")
_grid = click.option("--grid-file", type=click.Path(dir_okay=False), default=None, help="JSON list or CSV of alpha points.")


@click.group(cls=_Group)
@click.version_option(__version__)
def main() -> None:
    """Likelihood-ratio tests of AR(p) against two-regime mixture autoregressions."""


@main.command()
@_config
@click.option("--preset", type=click.Choice(sorted(PRESETS)), default=None, help="Take the DGP from a study preset.")
@click.option("--T", "length", type=click.IntRange(1, 10_000_000), default=None, help="Number of observations.")
@_seed
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def simulate(config_path, preset, length, seed, out):
    """Simulate a series; writes one float per line plus a sidecar JSON."""
    cfg = _load_config(config_path).simulate
    if preset is not None:
        cfg = validate(type(cfg), {**cfg.model_dump(), "dgp": PRESETS[preset]["dgp"]})
    cfg = override(cfg, T=length, seed=seed)
    y = simulate_dgp(cfg.dgp, cfg.T, cfg.seed, cfg.presample)
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("".join(f"{v!r}\n" for v in y.tolist()))
    meta = _header("simulate", cfg.seed, cfg)
    meta["rows"] = int(y.size)
    write_json(out.with_name(out.name + ".json"), meta)
    click.echo(f"wrote {y.size} values to {out}")


@main.command()
@click.argument("data", type=click.Path(dir_okay=False))
@_family
@_p
@_m
@_grid
@_seed
@_config
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def estimate(data, family, p, m, grid_file, seed, config_path, out):
    """Fit the null AR model and the mixture over the alpha grid."""
    cfg = _load_config(config_path).estimate
    cfg = override(cfg, seed=seed, **_model_overrides(family, p, m, grid_file, cfg))
    spec, grid = _spec_and_grid(cfg.model)
    y = read_series(data)
    null_fit = fit_ar(y, spec.p)
    fits = profile_alpha(spec, y, grid, cfg.ga, cfg.bounds, cfg.seed, null_fit)
    lr_stat, per_alpha = lr_from_fits(null_fit, fits)
    best = fits[best_fit(fits)]
    payload = _header("estimate", cfg.seed, cfg)
    payload.update(
        {
            "model": spec.to_dict(),
            "grid": grid.to_list(),
            "null_fit": null_fit.to_dict(),
            "best": best.to_dict(spec),
            "lr_stat": lr_stat,
            "per_alpha": [{"alpha": list(a), "lr": v} for a, v in per_alpha],
            "fits": [f.to_dict(spec) for f in fits],
        }
    )
    write_json(Path(out), payload)
    click.echo(f"AR loglik       {null_fit.loglik!r}")
    click.echo(f"mixture loglik  {best.loglik!r} at alpha={list(best.alpha)}")
    click.echo(f"LR_T            {lr_stat!r}")


@main.command("test")
@click.argument("data", type=click.Path(dir_okay=False))
@_family
@_p
@_m
@_grid
@click.option("--J", "J", type=click.IntRange(1, 10_000_000), default=None, help="Multiplier replications.")
@_seed
@_threads
@_config
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def test_cmd(data, family, p, m, grid_file, J, seed, threads, config_path, out):
    """Run the likelihood-ratio test and write the report as JSON."""
    cfg = _load_config(config_path).test
    cfg = override(cfg, J=J, seed=seed, **_model_overrides(family, p, m, grid_file, cfg))
    spec, grid = _spec_and_grid(cfg.model)
    y = read_series(data)
    if y.size < spec.p + 50:
        raise InputError(f"need at least p + 50 = {spec.p + 50} values, got {y.size}")
    report = run_test(spec, y, cfg, grid, threads=default_threads(threads))
    write_json(Path(out), report.to_dict())
    click.echo(f"LR_T            {report.lr_stat!r}")
    click.echo(f"p-value         {report.p_value!r}")
    click.echo(f"argmax alpha    {list(report.argmax_alpha)}")


@main.command()
@_config
@click.option("--preset", type=click.Choice(sorted(PRESETS)), default=None, help="Start from a study preset.")
@click.option("--replications", type=click.IntRange(1, 10_000_000), default=None)
@click.option("--J", "J", type=click.IntRange(1, 10_000_000), default=None)
@click.option("--T", "sizes", type=click.IntRange(20, 10_000_000), multiple=True, help="Sample size (repeatable).")
@_family
@_p
@_seed
@_threads
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Output stem; writes STEM.csv and STEM.json.")
def mc(config_path, preset, replications, J, sizes, family, p, seed, threads, out):
    """Monte Carlo size or power study."""
    cfg = _load_config(config_path).mc
    if preset is not None:
        cfg = validate(type(cfg), {**cfg.model_dump(), **PRESETS[preset]})
    cfg = override(
        cfg,
        replications=replications,
        J=J,
        seed=seed,
        p=p,
        sample_sizes=list(sizes) or None,
        families=[family] if family else None,
    )
    stem = Path(out)
    try:
        result = run_study(cfg, threads=default_threads(threads))
        status = 0
    except StudyFailure as exc:
        result, status = exc.result, EXIT_NUMERICAL
        click.echo(str(exc), err=True)
    stem.parent.mkdir(parents=True, exist_ok=True)
    stem.with_name(stem.name + ".csv").write_text(result.to_csv())
    write_json(stem.with_name(stem.name + ".json"), result.to_dict())
    click.echo(result.to_csv(), nl=False)
    click.echo(f"wall clock {result.wall_clock:.1f}s", err=True)
    if status:
        sys.exit(status)


if __name__ == "__main__":  # pragma: no cover
    main()
