"""Size and power studies for the LMAR and GMAR likelihood-ratio tests.

Each replication simulates one series from the configured DGP and runs every
requested test family on it.  Replications draw their seeds from
``(study seed, sample size, replication index)`` so they can run in any order
or in parallel; aggregation is a fold ordered by replication index.
"""

from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from regime_lr import __version__
from regime_lr._rng import RNG_ALGORITHM, make_rng
from regime_lr.config import DgpConfig, LrTestConfig, ModelConfig, StudyConfig
from regime_lr.errors import InputError, NumericalError, RegimeLRError
from regime_lr.lrtest import run_test
from regime_lr.mixture import MixtureParams, MixtureSpec, simulate_mixture
from regime_lr.timeseries import ArParams, simulate_ar

SCHEMA_VERSION = 1
DATA_STREAM = 3
TEST_STREAM = 4


class StudyFailure(NumericalError):
    """Raised when more than the allowed fraction of replications failed."""

    def __init__(self, result: StudyResult, rate: float):
        self.result = result
        super().__init__(f"study failed: replication failure rate {rate:.3f} exceeds {result.config.max_failure_rate}")


def dgp_regimes(dgp: DgpConfig) -> tuple[ArParams, ArParams | None]:
    r1 = ArParams(dgp.intercept, dgp.coeffs, dgp.sigma2)
    if dgp.kind == "ar":
        return r1, None
    icpt = dgp.intercept if dgp.regime2_intercept is None else dgp.regime2_intercept
    return r1, ArParams(icpt, dgp.regime2_coeffs, dgp.regime2_sigma2)


def simulate_dgp(dgp: DgpConfig, length: int, seed: int, presample: int = 200) -> np.ndarray:
    r1, r2 = dgp_regimes(dgp)
    if r2 is None:
        return simulate_ar(r1, length, presample, seed)
    spec = MixtureSpec(dgp.kind, dgp.p, dgp.m)
    params = MixtureParams.from_regimes(spec, dgp.alpha, r1, r2)
    return simulate_mixture(spec, params, length, presample, seed)


def _derived_seed(seed: int, *keys: int) -> int:
    return int(make_rng(seed, *keys).integers(0, 2**63 - 1))


def _test_config(cfg: StudyConfig, family: str, seed: int) -> LrTestConfig:
    return LrTestConfig(
        model=ModelConfig(family=family, p=cfg.p, m=cfg.m, grid=getattr(cfg, f"{family}_grid")),
        J=cfg.J,
        seed=seed,
        ga=cfg.ga,
        bounds=cfg.bounds,
        cone=cfg.cone,
    )


def run_replication(cfg: StudyConfig, length: int, rep: int) -> dict[str, Any]:
    """One replication: simulate, then test with each family; failures are recorded, not raised."""
    data_seed = _derived_seed(cfg.seed, DATA_STREAM, length, rep)
    y = simulate_dgp(cfg.dgp, length, data_seed, cfg.presample)
    out: dict[str, Any] = {"rep": rep, "T": length}
    for k, family in enumerate(cfg.families):
        test_seed = _derived_seed(cfg.seed, TEST_STREAM, length, rep, k)
        try:
            report = run_test(MixtureSpec(family, cfg.p, cfg.m), y, _test_config(cfg, family, test_seed))
            out[family] = {"p_value": report.p_value, "lr_stat": report.lr_stat, "error": None}
        except RegimeLRError as exc:
            out[family] = {"p_value": None, "lr_stat": None, "error": str(exc)}
    return out


def _rep_worker(args):
    return run_replication(*args)


@dataclass(frozen=True, eq=False)
class Cell:
    family: str
    T: int
    p_values: list[float | None]
    lr_stats: list[float | None]
    errors: list[str]

    @property
    def valid(self) -> np.ndarray:
        return np.array([p for p in self.p_values if p is not None], dtype=np.float64)

    @property
    def failures(self) -> int:
        return sum(p is None for p in self.p_values)

    def rejection_frequency(self, level: float) -> float:
        v = self.valid
        return float(np.mean(v < level)) if v.size else math.nan

    def standard_error(self, level: float) -> float:
        v = self.valid
        f = self.rejection_frequency(level)
        return math.sqrt(f * (1.0 - f) / v.size) if v.size else math.nan


@dataclass(frozen=True, eq=False)
class StudyResult:
    config: StudyConfig
    kind: str
    cells: list[Cell]
    wall_clock: float = field(default=0.0, compare=False)

    def cell(self, family: str, length: int) -> Cell:
        for c in self.cells:
            if c.family == family and c.T == length:
                return c
        raise KeyError((family, length))

    def rejection_frequency(self, family: str, length: int, level: float) -> float:
        return self.cell(family, length).rejection_frequency(level)

    @property
    def failure_rate(self) -> float:
        total = sum(len(c.p_values) for c in self.cells)
        return sum(c.failures for c in self.cells) / total if total else 0.0

    def table(self) -> list[dict[str, Any]]:
        rows = []
        for length in self.config.sample_sizes:
            row: dict[str, Any] = {"dgp": self.config.dgp.kind, "T": length}
            for fam in self.config.families:
                c = self.cell(fam, length)
                for lev in sorted(self.config.levels, reverse=True):
                    row[f"{fam}_{_pct(lev)}"] = c.rejection_frequency(lev)
                row[f"{fam}_failures"] = c.failures
            row["replications"] = self.config.replications
            rows.append(row)
        return rows

    def to_csv(self) -> str:
        rows = self.table()
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (f"{v:.4f}" if isinstance(v, float) else v) for k, v in row.items()})
        return buf.getvalue()

    def to_dict(self) -> dict[str, Any]:
        """Archive of every p-value; wall-clock time is left out so reruns are byte-identical."""
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": self.kind,
            "package_version": __version__,
            "rng": RNG_ALGORITHM,
            "seed": self.config.seed,
            "config": self.config.model_dump(mode="json"),
            "failure_rate": self.failure_rate,
            "table": self.table(),
            "cells": [
                {
                    "family": c.family,
                    "T": c.T,
                    "cross_family": c.family != self.config.dgp.kind,
                    "failures": c.failures,
                    "errors": c.errors,
                    "rejection_frequency": {_pct(lev): c.rejection_frequency(lev) for lev in self.config.levels},
                    "p_values": c.p_values,
                    "lr_stats": c.lr_stats,
                }
                for c in self.cells
            ],
        }


def _pct(level: float) -> str:
    return f"{100 * level:g}"


def _run_study(cfg: StudyConfig, kind: str, threads: int = 1) -> StudyResult:
    start = time.perf_counter()
    jobs = [(cfg, length, rep) for length in cfg.sample_sizes for rep in range(cfg.replications)]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_rep_worker, jobs, chunksize=1))
    else:
        results = [run_replication(*job) for job in jobs]
    cells = []
    for length in cfg.sample_sizes:
        reps = sorted((r for r in results if r["T"] == length), key=lambda r: r["rep"])
        for fam in cfg.families:
            cells.append(
                Cell(
                    fam,
                    length,
                    [r[fam]["p_value"] for r in reps],
                    [r[fam]["lr_stat"] for r in reps],
                    [f"rep {r['rep']}: {r[fam]['error']}" for r in reps if r[fam]["error"]],
                )
            )
    result = StudyResult(cfg, kind, cells, time.perf_counter() - start)
    if result.failure_rate > cfg.max_failure_rate:
        raise StudyFailure(result, result.failure_rate)
    return result


def run_size_study(cfg: StudyConfig, threads: int = 1) -> StudyResult:
    if cfg.dgp.kind != "ar":
        raise InputError("a size study needs an AR data-generating process")
    return _run_study(cfg, "size", threads)


def run_power_study(cfg: StudyConfig, threads: int = 1) -> StudyResult:
    """Power of every requested family; families other than the DGP's give cross-family power."""
    if cfg.dgp.kind == "ar":
        raise InputError("a power study needs an LMAR or GMAR data-generating process")
    return _run_study(cfg, "power", threads)


def run_study(cfg: StudyConfig, threads: int = 1) -> StudyResult:
    return run_size_study(cfg, threads) if cfg.dgp.kind == "ar" else run_power_study(cfg, threads)


# Editable presets.  The regime parameters are our own choices: the study
# design they imitate does not publish its DGP values in recoverable form.
PRESETS: dict[str, dict[str, Any]] = {
    "size-ar1": {"dgp": {"kind": "ar", "p": 1, "intercept": 0.0, "coeffs": [0.5], "sigma2": 1.0}},
    "power-gmar": {
        "dgp": {
            "kind": "gmar",
            "p": 1,
            "intercept": 0.0,
            "coeffs": [0.8],
            "sigma2": 1.0,
            "alpha": [0.5],
            "regime2_coeffs": [-0.2],
            "regime2_sigma2": 4.0,
        }
    },
    "power-lmar": {
        "dgp": {
            "kind": "lmar",
            "p": 1,
            "m": 1,
            "intercept": 1.0,
            "coeffs": [0.8],
            "sigma2": 1.0,
            "alpha": [0.0, 1.0],
            "regime2_intercept": -1.0,
            "regime2_coeffs": [-0.2],
            "regime2_sigma2": 4.0,
        }
    },
}


def preset(name: str, **overrides: Any) -> StudyConfig:
    if name not in PRESETS:
        raise InputError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    data = {**PRESETS[name], **overrides}
    return StudyConfig.model_validate(data)
