"""Versioned .npz serialization of CopulaPosterior; loading is bit-exact."""

import logging
from pathlib import Path

import numpy as np

from copula.correlation import RepairLog
from copula.density import CopulaPosterior
from copula.marginals import MarginalEstimate, NormalMarginal
from core.errors import ConfigError

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
_KDE, _NORMAL = 0, 1


def save_posterior(post: CopulaPosterior, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    kinds, samples, weights, knots, bandwidths = [], [], [], [], []
    for m in post.marginals:
        if isinstance(m, NormalMarginal):
            kinds.append(_NORMAL)
            samples.append(np.array([m.mu, m.sigma]))
            weights.append(np.zeros(2))
            knots.append(np.zeros(2))
            bandwidths.append(0.0)
        else:
            kinds.append(_KDE)
            samples.append(m.sample)
            weights.append(m.weights)
            knots.append(m.knots)
            bandwidths.append(m.bandwidth)
    offsets = np.concatenate([[0], np.cumsum([s.size for s in samples])]).astype(np.int64)

    with open(path, "wb") as fh:
        np.savez(
            fh,
            format_version=np.int64(FORMAT_VERSION),
            p=np.int64(post.p),
            indices=np.asarray(post.indices, dtype=np.int64),
            kinds=np.asarray(kinds, dtype=np.int64),
            offsets=offsets,
            samples=np.concatenate(samples),
            weights=np.concatenate(weights),
            knots=np.concatenate(knots),
            bandwidths=np.asarray(bandwidths, dtype=float),
            lambda_=np.ascontiguousarray(post.lambda_),
            repaired=np.bool_(post.repair.repaired),
            eigenvalue_floor=np.float64(post.repair.eigenvalue_floor),
            min_eigenvalue_before=np.float64(post.repair.min_eigenvalue_before),
            max_abs_change=np.float64(post.repair.max_abs_change),
            repair_rounds=np.int64(post.repair.rounds),
        )
    logger.info("Copula posterior (p=%d) written to %s", post.p, path)
    return path


def load_posterior(path: str | Path) -> CopulaPosterior:
    with np.load(path, allow_pickle=False) as data:
        version = int(data["format_version"])
        if version != FORMAT_VERSION:
            raise ConfigError(f"{path}: unsupported posterior format version {version}")
        p = int(data["p"])
        offsets = data["offsets"]
        marginals = []
        for i in range(p):
            lo, hi = offsets[i], offsets[i + 1]
            if int(data["kinds"][i]) == _NORMAL:
                mu, sigma = data["samples"][lo:hi]
                marginals.append(NormalMarginal(float(mu), float(sigma)))
                continue
            arrays = [data[key][lo:hi].copy() for key in ("samples", "weights", "knots")]
            for arr in arrays:
                arr.setflags(write=False)
            marginals.append(MarginalEstimate(arrays[0], arrays[1], float(data["bandwidths"][i]), arrays[2]))
        repair = RepairLog(
            bool(data["repaired"]),
            float(data["eigenvalue_floor"]),
            float(data["min_eigenvalue_before"]),
            float(data["max_abs_change"]),
            int(data["repair_rounds"]),
        )
        return CopulaPosterior(tuple(marginals), data["lambda_"].copy(), repair, tuple(int(k) for k in data["indices"]))
