"""Shared runner for the replication scripts."""

from __future__ import annotations

import argparse
import time
from dataclasses import dataclass, field
from pathlib import Path

from curetime.lifetable import load_lifetable, synthetic_lifetable
from curetime.optimizer import OptimizerConfig
from curetime.simgen import StudyConfig, preset, run_study


@dataclass
class RunConfig:
    settings: list[str]
    fit_family: str | None = None
    reps: int = 50
    n: int = 500
    seed: int = 1
    bootstrap_B: int = 0
    threads: int = 1
    lifetable: Path | None = None
    out_dir: Path = Path("results")
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)


def parse(settings: list[str], description: str, fit_family: str | None = None) -> RunConfig:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--settings", nargs="+", default=settings)
    p.add_argument("--fit-family", default=fit_family)
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--bootstrap", type=int, default=0, metavar="B")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--lifetable", type=Path)
    p.add_argument("--out-dir", type=Path, default=Path("results"))
    a = p.parse_args()
    return RunConfig(a.settings, a.fit_family, a.reps, a.n, a.seed, a.bootstrap, a.threads,
                     a.lifetable, a.out_dir)


def run(cfg: RunConfig) -> None:
    lt = load_lifetable(cfg.lifetable) if cfg.lifetable else synthetic_lifetable()
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    study = StudyConfig(fit_family=cfg.fit_family, optimizer=cfg.optimizer,
                        bootstrap_B=cfg.bootstrap_B, threads=cfg.threads)
    for name in cfg.settings:
        t = time.perf_counter()
        res = run_study(preset(name, reps=cfg.reps, n=cfg.n), lt, seed=cfg.seed, study=study)
        tag = f"{name}_{res.fit_family}"
        res.write_csv(cfg.out_dir / f"{tag}.csv")
        res.write_estimates(cfg.out_dir / f"{tag}_estimates.csv")
        print(res.table())
        print(f"[{time.perf_counter() - t:.1f}s]\n")
