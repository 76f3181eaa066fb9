"""
User reference tables: fit a copula posterior from an exported table,
draw from a saved posterior, evaluate its density at given points.

Summary-map files use the same dotenv format as experiment configs,
1-based indices throughout:

    S_1=1
    S_2=1,2
    S_1_2=1,2,3      # optional pair override
"""

import logging
import re
from pathlib import Path

import numpy as np
import pandas as pd
from dotenv import dotenv_values

from abc_engine.reference_table import ReferenceTable
from config import ExperimentConfig
from copula.density import copula_log_density, copula_sample
from copula.fit import fit_copula
from copula.storage import load_posterior, save_posterior
from core.errors import ConfigError
from core.rng import SeededRng
from core.samples import SummaryMap
from experiments.report import write_csv
from experiments.toy_kl import adjust_flags

logger = logging.getLogger(__name__)

_UNI_KEY = re.compile(r"^S_(\d+)$")
_PAIR_KEY = re.compile(r"^S_(\d+)_(\d+)$")


def _indices(path: Path, key: str, text: str | None, q: int) -> list[int]:
    try:
        values = [int(v) for v in (text or "").split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"{path}: {key}: expected comma-separated summary indices, got {text!r}") from None
    if not values:
        raise ConfigError(f"{path}: {key}: empty summary subset")
    bad = [v for v in values if not 1 <= v <= q]
    if bad:
        raise ConfigError(f"{path}: {key}: summary indices {bad} outside 1..{q}")
    return [v - 1 for v in values]


def load_summary_map(path: str | Path, p: int, q: int) -> SummaryMap:
    path = Path(path)
    univariate: dict[int, list[int]] = {}
    overrides: dict[tuple[int, int], list[int]] = {}
    for key, text in dotenv_values(path).items():
        if match := _UNI_KEY.match(key):
            i = int(match.group(1))
            if not 1 <= i <= p:
                raise ConfigError(f"{path}: {key}: parameter index outside 1..{p}")
            univariate[i - 1] = _indices(path, key, text, q)
        elif match := _PAIR_KEY.match(key):
            i, j = int(match.group(1)), int(match.group(2))
            if not (1 <= i <= p and 1 <= j <= p) or i == j:
                raise ConfigError(f"{path}: {key}: invalid parameter pair for p={p}")
            overrides[(i - 1, j - 1)] = _indices(path, key, text, q)
        else:
            raise ConfigError(f"{path}: unknown summary-map key {key}")
    missing = [i + 1 for i in range(p) if i not in univariate]
    if missing:
        raise ConfigError(f"{path}: summary map has no entry for parameter {missing[0]}")
    try:
        return SummaryMap.from_univariate([univariate[i] for i in range(p)], overrides)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def run_fit(cfg: ExperimentConfig) -> list[dict]:
    """Copula posterior from FIT_TABLE, FIT_SUMMARY_MAP and FIT_S_OBS, saved as posterior.npz."""
    cfg.require_model("user")
    p, q = cfg.get_optional_int("FIT_P"), cfg.get_optional_int("FIT_Q")
    table = ReferenceTable.from_csv(cfg.require_path("FIT_TABLE"), p, q, cfg.seed)
    smap = load_summary_map(cfg.require_path("FIT_SUMMARY_MAP"), table.p, table.q)
    s_obs = np.array(cfg.get_floats("FIT_S_OBS"))
    if s_obs.size != table.q:
        raise cfg.error("FIT_S_OBS", f"expected {table.q} observed summaries, got {s_obs.size}")
    if cfg.distance_for("euclidean") != "euclidean":
        raise cfg.error("DISTANCE", "user tables are fitted with the Euclidean distance")
    logger.info("Fitting copula to %d row(s), p=%d, q=%d", table.n, table.p, table.q)

    post = fit_copula(table, s_obs, smap, cfg.quantile, flags=adjust_flags(cfg), threads=cfg.threads)
    save_posterior(post, cfg.out_dir / "posterior.npz")
    return [
        {"param": f"theta_{i + 1}", "mean": m.mean(), "iqr": m.iqr(), "n": m.n}
        for i, m in zip(post.indices, post.marginals)
    ]


def run_sample(cfg: ExperimentConfig) -> list[dict]:
    post = load_posterior(cfg.require_path("FIT_POSTERIOR"))
    m = cfg.get_int("FIT_SAMPLES", minimum=1)
    draws = copula_sample(post, m, SeededRng(cfg.seed, ("sample",)))
    frame = pd.DataFrame(draws.params, columns=[f"theta_{i + 1}" for i in post.indices])
    write_csv(frame, cfg.out_dir / "samples.csv")
    logger.info("Drew %d sample(s) from %s", m, cfg.require_path("FIT_POSTERIOR"))
    return frame.to_dict("records")


def run_density(cfg: ExperimentConfig) -> list[dict]:
    """log g(θ) at every row of FIT_POINTS (one column per posterior margin)."""
    post = load_posterior(cfg.require_path("FIT_POSTERIOR"))
    points = pd.read_csv(cfg.require_path("FIT_POINTS"), float_precision="round_trip")
    if points.shape[1] != post.p:
        raise cfg.error("FIT_POINTS", f"points have {points.shape[1]} column(s), posterior has p={post.p}")
    log_density = copula_log_density(post, points.to_numpy(float))
    frame = points.assign(log_density=log_density, density=np.exp(log_density))
    write_csv(frame, cfg.out_dir / "density.csv")
    return frame.to_dict("records")
