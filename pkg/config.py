import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from dotenv import dotenv_values, load_dotenv

from core.errors import ConfigError

load_dotenv()

DEFAULT_THREADS = int(os.getenv("ABC_THREADS", os.cpu_count() or 1))
CACHE_DIR = os.getenv("ABC_CACHE_DIR", ".abc_cache")
LOG_LEVEL = os.getenv("ABC_LOG_LEVEL", "INFO").upper()

MODELS = ("toy", "gk", "varsel", "user")

# key -> (default, kind). Kinds: int, float, bool, str, ints, floats, path, or choice:a|b
SCHEMA: dict[str, tuple[str, str]] = {
    # --- global ---
    "MODEL": ("", "choice:|toy|gk|varsel|user"),
    "SEED": ("", "int"),
    "N": ("200000", "int"),
    "QUANTILE": ("0.005", "float"),
    "DISTANCE": ("", "choice:|euclidean|mahalanobis"),
    "REGRESSION_ADJUST": ("true", "bool"),
    "MARGINAL_ADJUST": ("true", "bool"),
    "LITERAL_PAIRS": ("false", "bool"),
    "REPLICATES": ("20", "int"),
    "OUT_DIR": ("results", "str"),
    "THREADS": (str(DEFAULT_THREADS), "int"),
    # --- twisted-normal toy ---
    "TOY_P": ("2,5,50", "ints"),
    "TOY_B": ("0.1", "float"),
    "TOY_SIGMA0": ("1.0", "float"),
    "TOY_METHODS": ("rejection,rejection+marg,regression,regression+marg,copula", "str"),
    "TOY_GRID_POINTS": ("200", "int"),
    # --- multivariate g-and-k ---
    "GK_Q": ("3", "int"),
    "GK_N_OBS": ("1757", "int"),
    "GK_TRUTH_A": ("0.0", "floats"),
    "GK_TRUTH_B": ("0.02", "floats"),
    "GK_TRUTH_G": ("0.3", "floats"),
    "GK_TRUTH_K": ("0.1", "floats"),
    "GK_TRUTH_NU": ("0.3", "floats"),
    "GK_PILOT_SIMS": ("2000", "int"),
    "GK_BOX_A": ("-0.1,0.1", "floats"),
    "GK_BOX_B": ("0.0,0.05", "floats"),
    "GK_BOX_G": ("-1.0,1.0", "floats"),
    "GK_BOX_K": ("-0.2,0.5", "floats"),
    "GK_GRID_POINTS": ("200", "int"),
    # --- variable selection ---
    "VARSEL_DATA": ("", "path"),
    "VARSEL_N": ("50", "int"),
    "VARSEL_P": ("10", "int"),
    "VARSEL_G": ("", "ints"),
    "VARSEL_N_KEEP": ("500", "int"),
    "VARSEL_OUTLIER_FACTOR": ("10.0", "float"),
    "VARSEL_TOP": ("10", "int"),
    # --- user reference tables and saved posteriors ---
    "FIT_TABLE": ("", "path"),
    "FIT_SUMMARY_MAP": ("", "path"),
    "FIT_S_OBS": ("", "floats"),
    "FIT_P": ("", "int"),
    "FIT_Q": ("", "int"),
    "FIT_POSTERIOR": ("", "path"),
    "FIT_SAMPLES": ("10000", "int"),
    "FIT_POINTS": ("", "path"),
}

_KEY_LINE = re.compile(r"^\s*(?:export\s+)?([A-Za-z_][A-Za-z0-9_]*)\s*=")
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved experiment settings; every value is kept as the string that produced it."""

    values: Mapping[str, str]
    path: Path | None = None
    lines: Mapping[str, int] = field(default_factory=dict)

    def _where(self, key: str) -> str:
        if self.path is not None and key in self.lines:
            return f"{self.path}:{self.lines[key]}: "
        return f"{self.path}: " if self.path is not None else ""

    def error(self, key: str, message: str) -> ConfigError:
        return ConfigError(f"{self._where(key)}{key}: {message}")

    def raw(self, key: str) -> str:
        if key not in SCHEMA:
            raise ConfigError(f"unknown configuration key {key}")
        # an empty value means the default
        return (self.values.get(key) or "").strip() or SCHEMA[key][0]

    def get_str(self, key: str) -> str:
        return self.raw(key)

    def get_int(self, key: str, minimum: int | None = None) -> int:
        text = self.raw(key)
        try:
            value = int(text)
        except ValueError:
            raise self.error(key, f"expected an integer, got {text!r}") from None
        if minimum is not None and value < minimum:
            raise self.error(key, f"must be >= {minimum}, got {value}")
        return value

    def get_optional_int(self, key: str) -> int | None:
        return self.get_int(key) if self.raw(key) else None

    def get_float(self, key: str) -> float:
        text = self.raw(key)
        try:
            return float(text)
        except ValueError:
            raise self.error(key, f"expected a number, got {text!r}") from None

    def get_bool(self, key: str) -> bool:
        text = self.raw(key).lower()
        if text in _TRUE:
            return True
        if text in _FALSE:
            return False
        raise self.error(key, f"expected true/false, got {text!r}")

    def get_floats(self, key: str) -> list[float]:
        text = self.raw(key)
        try:
            return [float(v) for v in text.split(",") if v.strip()]
        except ValueError:
            raise self.error(key, f"expected comma-separated numbers, got {text!r}") from None

    def get_ints(self, key: str) -> list[int]:
        text = self.raw(key)
        try:
            return [int(v) for v in text.split(",") if v.strip()]
        except ValueError:
            raise self.error(key, f"expected comma-separated integers, got {text!r}") from None

    def resolve_path(self, key: str) -> Path | None:
        """Relative paths are taken from the config file's directory."""
        text = self.raw(key)
        if not text:
            return None
        path = Path(text)
        if not path.is_absolute() and self.path is not None:
            path = self.path.parent / path
        return path

    def get_path(self, key: str) -> Path | None:
        path = self.resolve_path(key)
        if path is not None and not path.exists():
            raise self.error(key, f"file not found: {path}")
        return path

    def require_path(self, key: str) -> Path:
        path = self.get_path(key)
        if path is None:
            raise self.error(key, "is required for this command")
        return path

    # -- global settings ------------------------------------------------------

    @property
    def model(self) -> str:
        return self.raw("MODEL")

    @property
    def seed(self) -> int:
        if not self.raw("SEED"):
            raise self.error("SEED", "a seed is required (config file or --seed)")
        seed = self.get_int("SEED", minimum=0)
        if seed >= 2 ** 64:
            raise self.error("SEED", f"must fit in 64 bits, got {seed}")
        return seed

    @property
    def N(self) -> int:
        return self.get_int("N", minimum=1)

    @property
    def quantile(self) -> float:
        q = self.get_float("QUANTILE")
        if not 0.0 < q <= 1.0:
            raise self.error("QUANTILE", f"must lie in (0, 1], got {q}")
        return q

    def distance_for(self, model_default: str) -> str:
        """DISTANCE when set, otherwise the model's own default."""
        return self.raw("DISTANCE") or model_default

    @property
    def regression_adjust(self) -> bool:
        return self.get_bool("REGRESSION_ADJUST")

    @property
    def marginal_adjust(self) -> bool:
        return self.get_bool("MARGINAL_ADJUST")

    @property
    def literal_pairs(self) -> bool:
        return self.get_bool("LITERAL_PAIRS")

    @property
    def replicates(self) -> int:
        return self.get_int("REPLICATES", minimum=1)

    @property
    def out_dir(self) -> Path:
        return Path(self.raw("OUT_DIR"))

    @property
    def threads(self) -> int:
        return self.get_int("THREADS", minimum=1)

    def require_model(self, model: str) -> None:
        if self.model and self.model != model:
            raise self.error("MODEL", f"this command runs model {model!r}, config says {self.model!r}")

    def validate(self) -> None:
        """Type-check every key that was given explicitly."""
        for key in self.values:
            kind = SCHEMA[key][1]
            if kind.startswith("choice:"):
                options = kind.split(":", 1)[1].split("|")
                if self.raw(key) not in options:
                    raise self.error(key, f"must be one of {[o for o in options if o]}, got {self.raw(key)!r}")
            elif kind not in ("str", "path") and self.raw(key):
                getattr(self, f"get_{kind}")(key)
        self.seed
        self.quantile
        self.N
        self.replicates
        self.threads


def _key_lines(path: Path) -> dict[str, int]:
    lines = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        match = _KEY_LINE.match(line)
        if match:
            lines[match.group(1)] = lineno
    return lines


def load_experiment_config(
    path: str | Path | None = None,
    seed: int | None = None,
    threads: int | None = None,
    out: str | Path | None = None,
) -> ExperimentConfig:
    """Read a dotenv-format experiment file; command-line values override the file."""
    values: dict[str, str] = {}
    lines: dict[str, int] = {}
    cfg_path = None
    if path is not None:
        cfg_path = Path(path)
        if not cfg_path.exists():
            raise ConfigError(f"config file not found: {cfg_path}")
        lines = _key_lines(cfg_path)
        for key, value in dotenv_values(cfg_path).items():
            if key not in SCHEMA:
                raise ConfigError(f"{cfg_path}:{lines.get(key, 0)}: unknown key {key}")
            values[key] = "" if value is None else value

    for key, override in (("SEED", seed), ("THREADS", threads), ("OUT_DIR", out)):
        if override is not None:
            values[key] = str(override)
            lines.pop(key, None)

    cfg = ExperimentConfig(values, cfg_path, lines)
    cfg.validate()
    return cfg


def write_effective_config(cfg: ExperimentConfig, out_dir: str | Path) -> Path:
    """Echo every key with its resolved value; loading the file reproduces the run."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    target = out / "effective_config.env"
    body = []
    for key in SCHEMA:
        value = cfg.raw(key)
        if SCHEMA[key][1] == "path" and value:
            value = str(cfg.resolve_path(key).resolve())
        body.append(f"{key}={value}")
    target.write_text("\n".join(body) + "\n", encoding="utf-8")
    return target
