"""
Robust variable-selection experiment.

Ranks every γ three ways (exact enumeration, standard ABC frequencies,
discrete copula ABC) on a clean dataset and on the same dataset with one
outlying response, then counts how many top models the rankings share.
"""

import logging

from abc_engine.reference_table import cached_reference_table
from config import CACHE_DIR, ExperimentConfig
from core.errors import ConfigError
from core.rng import SeededRng
from discrete_copula.fit import fit_discrete_copula
from discrete_copula.ranking import ModelProbability, rank_models, ranking_frame, standard_abc_ranking, top_overlap
from experiments.report import build_varsel_report, write_csv, write_text
from models.varsel import (
    VarselModel,
    add_outlier,
    exact_enumerate,
    load_varsel_csv,
    robust_summaries,
    synthetic_varsel_data,
    varsel_simulator_model,
    varsel_summary_map,
)

logger = logging.getLogger(__name__)

OVERLAP_PAIRS = (
    ("copula_clean", "exact_clean"),
    ("standard_clean", "exact_clean"),
    ("copula_outlier", "exact_outlier"),
    ("standard_outlier", "exact_outlier"),
    # robustness: outlier-data rankings against the exact clean ranking
    ("copula_outlier", "exact_clean"),
    ("standard_outlier", "exact_clean"),
    ("copula_clean", "copula_outlier"),
    ("exact_clean", "exact_outlier"),
)


def varsel_dataset(cfg: ExperimentConfig) -> VarselModel:
    path = cfg.get_path("VARSEL_DATA")
    if path is not None:
        logger.info("Loading variable-selection data from %s", path)
        return load_varsel_csv(path)
    gen = SeededRng(cfg.seed, ("varsel-data",)).generator()
    try:
        return synthetic_varsel_data(gen, n=cfg.get_int("VARSEL_N", minimum=5), p_cov=cfg.get_int("VARSEL_P", minimum=2))
    except ValueError as exc:
        raise ConfigError(f"synthetic variable-selection data: {exc}") from exc


def reduced_model(cfg: ExperimentConfig, model: VarselModel, exact: list[ModelProbability]) -> tuple[int, ...]:
    """G from VARSEL_G (1-based) or the covariates of the exact top model."""
    given = cfg.get_ints("VARSEL_G")
    if given:
        if any(not 1 <= g <= model.p_cov for g in given):
            raise cfg.error("VARSEL_G", f"covariate indices must lie in 1..{model.p_cov}, got {given}")
        return tuple(g - 1 for g in given)
    return tuple(i for i, g in enumerate(exact[0].gamma) if g)


def rank_dataset(model: VarselModel, table, n_keep: int, seed: int, threads: int) -> dict[str, list[ModelProbability]]:
    s_obs = robust_summaries(model.X, model.y, model.G)
    smap = varsel_summary_map(model.p_cov, model.G)
    standard = standard_abc_ranking(table, s_obs, smap.all_indices(), n_keep)
    post = fit_discrete_copula(table, s_obs, smap, n_keep, threads=threads)
    logger.info("Copula inclusion probabilities: %s", " ".join(f"{v:.3f}" for v in post.inclusion_probabilities()))
    return {
        "exact": exact_enumerate(model, threads),
        "standard": standard,
        "copula": rank_models(post, seed=seed, threads=threads),
    }


def run_varsel(cfg: ExperimentConfig) -> list[dict]:
    """Six ranking CSVs, the overlap table (eight pairs) and a text report."""
    cfg.require_model("varsel")
    if cfg.distance_for("euclidean") != "euclidean":
        raise cfg.error("DISTANCE", "variable selection uses the Euclidean distance")
    n_keep = cfg.get_int("VARSEL_N_KEEP", minimum=1)
    top = cfg.get_int("VARSEL_TOP", minimum=1)
    out = cfg.out_dir

    base = varsel_dataset(cfg)
    G = reduced_model(cfg, base, exact_enumerate(base, cfg.threads))
    clean = base.with_reduced(G)
    logger.info("n=%d, %d covariate(s), reduced model G=%s", clean.n, clean.p_cov, [g + 1 for g in G])

    # the simulator depends on X and G only, so both datasets share one table
    table = cached_reference_table(
        varsel_simulator_model(clean), cfg.N, SeededRng(cfg.seed, ("varsel-table",)), CACHE_DIR, cfg.threads
    )
    datasets = {"clean": clean, "outlier": add_outlier(clean, cfg.get_float("VARSEL_OUTLIER_FACTOR"))}

    rankings: dict[str, list[ModelProbability]] = {}
    for label, model in datasets.items():
        logger.info("=" * 50)
        logger.info("Ranking models on the %s dataset", label)
        logger.info("=" * 50)
        for method, ranked in rank_dataset(model, table, n_keep, cfg.seed, cfg.threads).items():
            rankings[f"{method}_{label}"] = ranked
            write_csv(ranking_frame(ranked), out / f"ranking_{method}_{label}.csv")

    overlap = [
        {"first": a, "second": b, "k": top, "overlap": top_overlap(rankings[a], rankings[b], top)}
        for a, b in OVERLAP_PAIRS
    ]
    for row in overlap:
        logger.info("Top-%d overlap %s vs %s: %d", top, row["first"], row["second"], row["overlap"])
    write_csv(overlap, out / "overlap.csv")

    frames = {name: ranking_frame(ranked).to_dict("records") for name, ranked in rankings.items()}
    write_text(build_varsel_report(frames, overlap, top), out / "report.txt")
    return overlap
