"""
Prior-predictive reference table.

N pairs (θ, s) drawn from f(θ)L(s|θ) together with the importance ratios
p(θ)/f(θ). One table is simulated once and reused for every marginal and
pairwise selection; it is cached on disk between CLI runs.
"""

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np
import pandas as pd

from core.errors import ConfigError, DimensionError, NumericalError, SimulationError
from core.parallel import parallel_map
from core.rng import SeededRng

logger = logging.getLogger(__name__)

MAX_SIMULATION_ATTEMPTS = 10
BLOCK_SIZE = 10_000
_MAGIC = "ABCREF1"


@dataclass(frozen=True)
class SimulatorModel:
    """Everything the sampler needs to know about a model.

    Batch hooks are optional fast paths; the per-row callables are always
    required because failed rows are re-simulated one at a time.
    """

    name: str
    p: int
    q: int
    prior_sample: Callable[[np.random.Generator], np.ndarray]
    simulate: Callable[[np.ndarray, np.random.Generator], np.ndarray]
    log_prior: Callable[[np.ndarray], float] | None = None
    importance_sample: Callable[[np.random.Generator], np.ndarray] | None = None
    log_importance: Callable[[np.ndarray], float] | None = None
    prior_sample_batch: Callable[[int, np.random.Generator], np.ndarray] | None = None
    simulate_batch: Callable[[np.ndarray, np.random.Generator], np.ndarray] | None = None
    config: Mapping[str, Any] = field(default_factory=dict)

    def draw(self, gen: np.random.Generator) -> np.ndarray:
        sampler = self.importance_sample or self.prior_sample
        return np.asarray(sampler(gen), dtype=float).ravel()

    def draw_batch(self, n: int, gen: np.random.Generator) -> np.ndarray:
        if self.importance_sample is None and self.prior_sample_batch is not None:
            return np.asarray(self.prior_sample_batch(n, gen), dtype=float).reshape(n, self.p)
        return np.vstack([self.draw(gen) for _ in range(n)]) if n else np.empty((0, self.p))

    def importance_ratio(self, theta: np.ndarray) -> float:
        if self.importance_sample is None:
            return 1.0
        if self.log_prior is None or self.log_importance is None:
            raise ConfigError(f"model {self.name} has an importance sampler but no densities")
        return float(np.exp(self.log_prior(theta) - self.log_importance(theta)))


@dataclass(frozen=True)
class ReferenceTable:
    params: np.ndarray
    summaries: np.ndarray
    ratios: np.ndarray
    seed: int = 0
    model_id: str = "user"

    def __post_init__(self):
        params = np.asarray(self.params, dtype=float)
        summaries = np.asarray(self.summaries, dtype=float)
        ratios = np.asarray(self.ratios, dtype=float).ravel()
        if params.ndim != 2 or summaries.ndim != 2:
            raise DimensionError("reference table needs 2-D parameter and summary arrays")
        if not (params.shape[0] == summaries.shape[0] == ratios.shape[0]):
            raise DimensionError("reference table row counts disagree")
        if params.shape[0] < 1:
            raise DimensionError("reference table is empty")
        for name, arr in (("params", params), ("summaries", summaries), ("ratios", ratios)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.params.shape[0]

    @property
    def p(self) -> int:
        return self.params.shape[1]

    @property
    def q(self) -> int:
        return self.summaries.shape[1]

    # -- binary cache ---------------------------------------------------------

    def save(self, path: str | Path) -> None:
        """Header line (magic N p q seed model_id) then row-major float64 rows [θ | s | ratio]."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        header = f"{_MAGIC} {self.n} {self.p} {self.q} {self.seed} {self.model_id}\n".encode("ascii")
        body = np.ascontiguousarray(np.hstack([self.params, self.summaries, self.ratios[:, None]]), dtype="<f8")
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(body.tobytes(order="C"))

    @classmethod
    def load(cls, path: str | Path) -> "ReferenceTable":
        with open(path, "rb") as fh:
            header = fh.readline().decode("ascii").split()
            if len(header) != 6 or header[0] != _MAGIC:
                raise ConfigError(f"{path}: not a reference-table cache file")
            n, p, q, seed = (int(v) for v in header[1:5])
            body = np.frombuffer(fh.read(), dtype="<f8")
        if body.size != n * (p + q + 1):
            raise ConfigError(f"{path}: expected {n * (p + q + 1)} values, found {body.size}")
        rows = body.reshape(n, p + q + 1)
        return cls(rows[:, :p].copy(), rows[:, p:p + q].copy(), rows[:, -1].copy(), seed, header[5])

    # -- CSV exchange -----------------------------------------------------------

    def to_frame(self) -> pd.DataFrame:
        cols = {f"theta_{i + 1}": self.params[:, i] for i in range(self.p)}
        cols.update({f"s_{k + 1}": self.summaries[:, k] for k in range(self.q)})
        cols["ratio"] = self.ratios
        return pd.DataFrame(cols)

    def to_csv(self, path: str | Path) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.17g")

    @classmethod
    def from_csv(cls, path: str | Path, p: int | None = None, q: int | None = None, seed: int = 0) -> "ReferenceTable":
        df = pd.read_csv(path, float_precision="round_trip")
        theta_cols = [c for c in df.columns if c.startswith("theta_")]
        s_cols = [c for c in df.columns if c.startswith("s_")]
        if p is not None and len(theta_cols) != p:
            raise ConfigError(f"{path}: expected {p} theta_ columns, found {len(theta_cols)}")
        if q is not None and len(s_cols) != q:
            raise ConfigError(f"{path}: expected {q} s_ columns, found {len(s_cols)}")
        expected = [f"theta_{i + 1}" for i in range(len(theta_cols))] + [f"s_{k + 1}" for k in range(len(s_cols))]
        if theta_cols + s_cols != expected:
            raise ConfigError(f"{path}: columns must be theta_1..theta_p, s_1..s_q, ratio")
        ratios = df["ratio"].to_numpy(float) if "ratio" in df.columns else np.ones(len(df))
        if df[expected].isna().to_numpy().any():
            raise ConfigError(f"{path}: table contains missing values")
        try:
            return cls(df[theta_cols].to_numpy(float), df[s_cols].to_numpy(float), ratios, seed, Path(path).stem)
        except DimensionError as exc:
            raise ConfigError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------

def _simulate_row(model: SimulatorModel, gen: np.random.Generator, theta: np.ndarray | None = None):
    """Simulate one row, redrawing θ after failures; at most MAX_SIMULATION_ATTEMPTS tries."""
    last_error: Exception | None = None
    for attempt in range(MAX_SIMULATION_ATTEMPTS):
        if theta is None or attempt > 0:
            theta = model.draw(gen)
        try:
            s = np.asarray(model.simulate(theta, gen), dtype=float).ravel()
        except (ArithmeticError, ValueError, np.linalg.LinAlgError, NumericalError) as exc:
            last_error = exc
            continue
        if s.size == model.q and np.all(np.isfinite(s)):
            return theta, s
        last_error = ValueError("non-finite summaries")
    raise SimulationError(f"{model.name}: simulation failed {MAX_SIMULATION_ATTEMPTS} times ({last_error})")


def _simulate_block(model: SimulatorModel, n: int, rng: SeededRng) -> tuple[np.ndarray, np.ndarray]:
    gen = rng.generator()
    thetas = model.draw_batch(n, gen)
    summaries = np.full((n, model.q), np.nan)

    if model.simulate_batch is not None:
        try:
            summaries = np.asarray(model.simulate_batch(thetas, gen), dtype=float).reshape(n, model.q)
        except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            logger.warning("%s: batch simulation failed (%s); falling back to rows", model.name, exc)
            summaries = np.full((n, model.q), np.nan)
        failed = np.flatnonzero(~np.all(np.isfinite(summaries), axis=1))
        retry_first = False
    else:
        failed = np.arange(n)
        retry_first = True

    if failed.size and not retry_first:
        logger.warning("%s: re-simulating %d failed row(s)", model.name, failed.size)
    for row in failed:
        theta, s = _simulate_row(model, gen, None if not retry_first else thetas[row])
        thetas[row] = theta
        summaries[row] = s
    return thetas, summaries


def build_reference_table(model: SimulatorModel, N: int, rng: SeededRng, threads: int = 1) -> ReferenceTable:
    """Simulate N rows in fixed-size blocks, one RNG stream per block."""
    if N < 1:
        raise DimensionError(f"reference table needs N >= 1, got {N}")
    starts = list(range(0, N, BLOCK_SIZE))
    logger.info("%s: simulating %d rows in %d block(s)", model.name, N, len(starts))

    def run(block: int):
        n = min(BLOCK_SIZE, N - starts[block])
        return _simulate_block(model, n, rng.child(block))

    blocks = parallel_map(run, range(len(starts)), threads)
    params = np.vstack([b[0] for b in blocks])
    summaries = np.vstack([b[1] for b in blocks])
    ratios = np.array([model.importance_ratio(t) for t in params]) if model.importance_sample else np.ones(N)
    return ReferenceTable(params, summaries, ratios, rng.seed, model.name)


def cache_key(model: SimulatorModel, N: int, rng: SeededRng) -> str:
    payload = json.dumps(
        {"model": model.name, "config": model.config, "N": N, "seed": rng.seed, "stream": list(rng.stream)},
        sort_keys=True,
        default=str,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:24]


def cached_reference_table(
    model: SimulatorModel,
    N: int,
    rng: SeededRng,
    cache_dir: str | Path | None,
    threads: int = 1,
) -> ReferenceTable:
    """Load the table from `cache_dir` when present, otherwise simulate and store it."""
    if cache_dir is None:
        return build_reference_table(model, N, rng, threads)
    path = Path(cache_dir) / f"{model.name}-{cache_key(model, N, rng)}.bin"
    if path.exists():
        logger.info("Reference table cache hit: %s", path)
        return ReferenceTable.load(path)
    table = build_reference_table(model, N, rng, threads)
    table.save(path)
    logger.info("Reference table cached at %s", path)
    return table
