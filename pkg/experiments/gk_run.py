"""
Multivariate g-and-k experiment.

One reference table from the prior box, then per observed dataset:
Euclidean pilot fit → θ₀ = marginal means → Σ₀ from simulations at θ₀
→ Mahalanobis copula fit → approximate marginal MLE of (B₁, k₁).
The first dataset also gets the full posterior file and the (B₁, k₁)
grids; every dataset contributes one coverage row.
"""

import logging
from itertools import combinations

import numpy as np
import pandas as pd

from abc_engine.reference_table import ReferenceTable, cached_reference_table
from abc_engine.selection import abc_select
from adjustments.marginal import marginal_adjust
from adjustments.regression import regression_adjust
from config import CACHE_DIR, ExperimentConfig
from copula.correlation import repair_correlation
from copula.density import CopulaPosterior
from copula.fit import AdjustFlags, fit_copula, fit_marginals, pair_sample
from copula.mle import MleResult, approx_mle
from copula.storage import save_posterior
from core.distance import DistanceSpec, estimate_mahalanobis_scale
from core.errors import ConfigError, NumericalError
from core.parallel import parallel_map
from core.rng import SeededRng
from core.samples import SummaryMap
from diagnostics.grid import GridSpec
from diagnostics.kde2d import copula_bivariate_grid, kde2d_sample
from experiments.report import build_mle_table, write_csv
from experiments.toy_kl import adjust_flags
from models.gk import (
    GkParams,
    GkPriorBox,
    MultiGkModel,
    correlation_from_vector,
    gk_simulate_params,
    gk_simulator_model,
    gk_summary_map,
    multigk_simulate,
    multigk_summary_vector,
    parameter_names,
)

logger = logging.getLogger(__name__)

B1_K1 = (1, 3)
GRID_METHODS = ("regression", "marginal", "regression+marginal", "pairwise-KDE", "copula")
GRID_TAIL = 0.001


# --- Config ---

def _per_margin(cfg: ExperimentConfig, key: str, count: int) -> list[float]:
    values = cfg.get_floats(key)
    if len(values) == 1:
        return values * count
    if len(values) != count:
        raise cfg.error(key, f"expected 1 or {count} value(s), got {len(values)}")
    return values


def gk_box(cfg: ExperimentConfig) -> GkPriorBox:
    bounds = {}
    for kind in ("A", "B", "g", "k"):
        key = f"GK_BOX_{kind.upper()}"
        values = cfg.get_floats(key)
        if len(values) != 2 or not values[0] < values[1]:
            raise cfg.error(key, f"expected 'low,high' with low < high, got {values}")
        bounds[kind] = tuple(values)
    return GkPriorBox(**bounds)


def gk_truth(cfg: ExperimentConfig) -> MultiGkModel:
    q = cfg.get_int("GK_Q", minimum=1)
    columns = [_per_margin(cfg, f"GK_TRUTH_{s}", q) for s in ("A", "B", "G", "K")]
    nu = _per_margin(cfg, "GK_TRUTH_NU", q * (q - 1) // 2) if q > 1 else []
    try:
        margins = tuple(GkParams(a, b, g, k) for a, b, g, k in zip(*columns))
        return MultiGkModel(q, margins, correlation_from_vector(nu, q), cfg.get_int("GK_N_OBS", minimum=8))
    except (ValueError, NumericalError) as exc:
        raise ConfigError(f"g-and-k ground truth: {exc}") from exc


# --- Pipeline stages ---

def observed_dataset(truth: MultiGkModel, seed: int, r: int) -> np.ndarray:
    return multigk_simulate(truth, SeededRng(seed, ("gk-observed", r)).generator())


def pilot_theta0(table: ReferenceTable, s_obs: np.ndarray, smap: SummaryMap, quantile: float, q: int) -> np.ndarray:
    """Marginal means of the Euclidean pilot fit; the V block is repaired to a valid correlation."""
    marginals = fit_marginals(table, s_obs, smap, quantile, DistanceSpec.euclidean())
    theta0 = np.array([m.mean() for m in marginals])
    if q > 1:
        v, _ = repair_correlation(correlation_from_vector(theta0[4 * q:], q))
        theta0[4 * q:] = [v[i, j] for i, j in combinations(range(q), 2)]
    return theta0


def mahalanobis_spec(theta0: np.ndarray, q: int, n_obs: int, m: int, rng: SeededRng) -> DistanceSpec:
    scale = estimate_mahalanobis_scale(lambda th, gen: gk_simulate_params(th, q, n_obs, gen), theta0, m, rng)
    return DistanceSpec.mahalanobis(scale)


def stage_spec(
    cfg: ExperimentConfig, table: ReferenceTable, s_obs: np.ndarray, smap: SummaryMap, q: int, n_obs: int, r: int
) -> tuple[DistanceSpec, np.ndarray]:
    theta0 = pilot_theta0(table, s_obs, smap, cfg.quantile, q)
    if cfg.distance_for("mahalanobis") == "euclidean":
        return DistanceSpec.euclidean(), theta0
    m = cfg.get_int("GK_PILOT_SIMS", minimum=2)
    return mahalanobis_spec(theta0, q, n_obs, m, SeededRng(cfg.seed, ("gk-pilot", r))), theta0


def mle_b1_k1(post: CopulaPosterior, box: GkPriorBox, seed: int, r: int) -> MleResult:
    positions = [post.indices.index(i) for i in B1_K1]
    return approx_mle(post, lambda x: box.log_density(x, ["B", "k"]), positions, SeededRng(seed, ("gk-mle", r)))


def covered(result: MleResult, truth: np.ndarray) -> bool:
    lo, hi = result.interval()
    return bool(np.all(np.isfinite(result.se)) and np.all((lo <= truth) & (truth <= hi)))


# --- Grids ---

def b1_k1_grid(post: CopulaPosterior, n: int) -> GridSpec:
    """Copula marginal quantile range of B₁ and k₁, widened by a quarter on each side."""
    ranges = []
    for i in B1_K1:
        m = post.marginals[post.indices.index(i)]
        lo, hi = float(m.quantile(GRID_TAIL)), float(m.quantile(1 - GRID_TAIL))
        pad = 0.25 * (hi - lo) if hi > lo else 1e-3
        ranges.append((lo - pad, hi + pad))
    return GridSpec(ranges[0][0], ranges[0][1], ranges[1][0], ranges[1][1], n, n)


def b1_k1_frames(
    table: ReferenceTable, s_obs: np.ndarray, smap: SummaryMap, quantile: float, spec: DistanceSpec,
    post: CopulaPosterior, flags: AdjustFlags, grid: GridSpec,
) -> pd.DataFrame:
    """(B₁, k₁) density of every comparison method on one grid."""
    full = list(range(table.q))
    rejection = abc_select(table, s_obs, full, quantile, spec).take_params(B1_K1)
    regressed = regression_adjust(rejection, s_obs, full)
    marginals = [post.marginals[post.indices.index(i)] for i in B1_K1]
    samples = {
        "regression": regressed,
        "marginal": marginal_adjust(rejection, marginals),
        "regression+marginal": marginal_adjust(regressed, marginals),
        "pairwise-KDE": pair_sample(table, s_obs, smap, B1_K1, quantile, spec, marginals, flags),
    }
    frames = [kde2d_sample(samples[m], grid).to_frame(m) for m in GRID_METHODS if m in samples]
    positions = tuple(post.indices.index(i) for i in B1_K1)
    frames.append(copula_bivariate_grid(post, positions, grid).to_frame("copula"))
    return pd.concat(frames, ignore_index=True)


# --- Command ---

def run_gk(cfg: ExperimentConfig) -> list[dict]:
    """Posterior, grids, MLE report and coverage rows for the g-and-k model."""
    cfg.require_model("gk")
    truth = gk_truth(cfg)
    box = gk_box(cfg)
    q, n_obs = truth.q, truth.n_obs
    names = parameter_names(q)
    theta_true = truth.to_vector()
    if not np.isfinite(box.log_density(theta_true[:4 * q], ["A", "B", "g", "k"] * q)):
        logger.warning("Ground truth lies outside the prior box; coverage will be poor")
    flags = adjust_flags(cfg)
    smap = gk_summary_map(q)
    out = cfg.out_dir

    simulator = gk_simulator_model(q, n_obs, box)
    logger.info("g-and-k q=%d: p=%d parameters, %d summaries, N=%d", q, simulator.p, simulator.q, cfg.N)
    table = cached_reference_table(simulator, cfg.N, SeededRng(cfg.seed, ("gk-table",)), CACHE_DIR, cfg.threads)

    data = observed_dataset(truth, cfg.seed, 0)
    write_csv(pd.DataFrame(data, columns=[f"x{j + 1}" for j in range(q)]), out / "observed.csv")
    s_obs = multigk_summary_vector(data)
    spec, theta0 = stage_spec(cfg, table, s_obs, smap, q, n_obs, 0)
    write_csv(pd.DataFrame({"param": names, "theta0": theta0, "truth": theta_true}), out / "theta0.csv")

    post = fit_copula(table, s_obs, smap, cfg.quantile, spec, flags, threads=cfg.threads)
    save_posterior(post, out / "posterior.npz")

    grid = b1_k1_grid(post, cfg.get_int("GK_GRID_POINTS", minimum=10))
    write_csv(b1_k1_frames(table, s_obs, smap, cfg.quantile, spec, post, flags, grid), out / "grid_B1_k1.csv")

    first = mle_b1_k1(post, box, cfg.seed, 0)
    lo, hi = first.interval()
    mle_rows = [
        {
            "param": names[i], "truth": float(theta_true[i]), "estimate": float(first.estimate[k]),
            "se": float(first.se[k]), "lower": float(lo[k]), "upper": float(hi[k]), "converged": first.converged,
        }
        for k, i in enumerate(B1_K1)
    ]
    write_csv(mle_rows, out / "mle_report.csv")
    print(build_mle_table(mle_rows))

    def replicate(r: int) -> dict:
        if r == 0:
            result = first
        else:
            s_r = multigk_summary_vector(observed_dataset(truth, cfg.seed, r))
            spec_r, _ = stage_spec(cfg, table, s_r, smap, q, n_obs, r)
            sub = fit_copula(table, s_r, smap, cfg.quantile, spec_r, flags, indices=B1_K1)
            result = mle_b1_k1(sub, box, cfg.seed, r)
        return {
            "replicate": r,
            "B1_estimate": float(result.estimate[0]), "B1_se": float(result.se[0]),
            "k1_estimate": float(result.estimate[1]), "k1_se": float(result.se[1]),
            "covered": covered(result, theta_true[list(B1_K1)]),
        }

    coverage = parallel_map(replicate, range(cfg.replicates), cfg.threads)
    write_csv(coverage, out / "coverage.csv")
    hits = sum(row["covered"] for row in coverage)
    logger.info("g-and-k: truth inside MLE ± 2se in %d of %d replicate(s)", hits, len(coverage))
    return coverage
