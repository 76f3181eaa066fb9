"""
Twisted-normal KL comparison.

For every requested p: mean KL of each method over the replicates, and a
long-format (θ₁, θ₂) grid file holding the exact posterior plus each
method's estimate from the first replicate's table.
"""

import logging

import pandas as pd

from config import ExperimentConfig
from copula.fit import AdjustFlags
from core.errors import ConfigError
from diagnostics.grid import GridSpec
from diagnostics.replicate import METHODS, PAIR, estimate_pair_density, replicate_kl_methods, replicate_table
from experiments.report import build_kl_table, write_csv
from models.twisted_normal import TwistedNormalModel, toy_default_grid, toy_posterior_grid, toy_summary_map

logger = logging.getLogger(__name__)


def toy_methods(cfg: ExperimentConfig) -> tuple[str, ...]:
    methods = tuple(m.strip() for m in cfg.get_str("TOY_METHODS").split(",") if m.strip())
    unknown = [m for m in methods if m not in METHODS]
    if not methods or unknown:
        raise cfg.error("TOY_METHODS", f"unknown method(s) {unknown}; choose from {', '.join(METHODS)}")
    return methods


def adjust_flags(cfg: ExperimentConfig) -> AdjustFlags:
    return AdjustFlags(cfg.regression_adjust, cfg.marginal_adjust, cfg.literal_pairs)


def toy_grid_frame(
    model: TwistedNormalModel, methods: tuple[str, ...], N: int, seed: int, quantile: float,
    grid: GridSpec, flags: AdjustFlags,
) -> pd.DataFrame:
    table = replicate_table(model, N, seed, 0)
    smap = toy_summary_map(model.p)
    frames = [toy_posterior_grid(model, PAIR, grid).to_frame("truth")]
    for method in methods:
        est = estimate_pair_density(table, model.y_obs, smap, method, quantile, grid, flags)
        frames.append(est.to_frame(method))
    return pd.concat(frames, ignore_index=True)


def run_toy_kl(cfg: ExperimentConfig) -> list[dict]:
    """Table of mean KL per (p, method); writes kl_results.csv and grid_p{p}.csv."""
    cfg.require_model("toy")
    if cfg.distance_for("euclidean") != "euclidean":
        raise cfg.error("DISTANCE", "the toy experiment uses the Euclidean distance")
    ps = cfg.get_ints("TOY_P")
    if not ps or min(ps) < 2:
        raise cfg.error("TOY_P", f"need one or more dimensions >= 2, got {ps}")
    methods = toy_methods(cfg)
    flags = adjust_flags(cfg)
    n_grid = cfg.get_int("TOY_GRID_POINTS", minimum=10)

    rows = []
    for p in ps:
        try:
            model = TwistedNormalModel(p, b=cfg.get_float("TOY_B"), sigma0=cfg.get_float("TOY_SIGMA0"))
        except ValueError as exc:
            raise ConfigError(f"toy model: {exc}") from exc
        logger.info("p=%d: %d method(s), N=%d, %d replicate(s)", p, len(methods), cfg.N, cfg.replicates)
        grid = toy_default_grid(model, PAIR, n_grid)
        rows.extend(replicate_kl_methods(
            model, methods, cfg.N, cfg.replicates, cfg.seed, cfg.quantile, cfg.threads, grid, flags
        ))
        write_csv(toy_grid_frame(model, methods, cfg.N, cfg.seed, cfg.quantile, grid, flags), cfg.out_dir / f"grid_p{p}.csv")

    write_csv(rows, cfg.out_dir / "kl_results.csv")
    print(build_kl_table(rows))
    return rows
