"""
Pipeline configuration.

Values are resolved from, in decreasing priority: command-line flags, a
``--config`` file in dotenv syntax, the process environment (after
loading ``.env``), and the dataclass defaults. Environment and config
file keys carry the ``RERANK_`` prefix.
"""
import os
import logging
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Mapping, Optional, Tuple

from dotenv import dotenv_values, load_dotenv

from utils.errors import UsageError

logger = logging.getLogger(__name__)

ENV_PREFIX = "RERANK_"
LIST_SEPARATOR = ","
MODEL_TYPES = ("arpa", "countlm", "taglm", "parser", "uniform", "mixture")


@dataclass
class PipelineConfig:
    """Every path, hyperparameter and run setting a command may need."""

    # paths
    corpus: Optional[str] = None
    heldout: Optional[str] = None
    counts: List[str] = field(default_factory=list)
    vocab: Optional[str] = None
    coc: Optional[str] = None
    model: Optional[str] = None
    tag_inventory: Optional[str] = None
    tag_model: Optional[str] = None
    basenp_model: Optional[str] = None
    link_model: Optional[str] = None
    components: List[str] = field(default_factory=list)
    one_best: Optional[str] = None
    gold: Optional[str] = None
    nbest: List[str] = field(default_factory=list)
    sources: Optional[str] = None
    references: List[str] = field(default_factory=list)
    candidates: Optional[str] = None
    weights: Optional[str] = None
    output: Optional[str] = None
    log_file: Optional[str] = None
    html: Optional[str] = None

    # hyperparameters
    model_type: str = "arpa"
    order: int = 3
    cutoff: int = 1
    unk_threshold: int = 1
    lowercase: bool = True
    map_numbers: bool = True
    fallback_discount: Optional[float] = None
    alpha: Optional[float] = None
    alpha_range: Tuple[int, int] = (2, 20)
    target_count: int = 1
    max_reject_ratio: float = 0.01
    buckets: List[float] = field(default_factory=lambda: [0, 1, 2, 4, 8, 16, 64, 256])
    em_iterations: int = 200
    beam_threshold: Optional[float] = 1e-4
    beam_width: Optional[int] = 64
    nbest_limit: int = 3000
    feature: Optional[str] = None
    failure_penalty: float = 100.0
    oov_mode: str = "open"
    restarts: int = 8
    simplex_step: float = 1.0
    perturbation: float = 1.0
    min_edge: float = 1e-3
    fixed_weights: List[str] = field(default_factory=lambda: ["decoder_score=1.0"])
    mixture_weights: List[float] = field(default_factory=list)
    mixture_mode: str = "static"

    # run metadata
    seed: int = 0
    threads: int = 1
    log_level: str = "INFO"

    @classmethod
    def resolve(cls, flags: Optional[Mapping[str, Any]] = None, config_file: Optional[str] = None,
                environ: Optional[Mapping[str, str]] = None) -> "PipelineConfig":
        """
        Build a configuration from flags, a config file, the environment and defaults.

        Args:
            flags (dict): Parsed flag values; ``None`` means not given
            config_file (str): Optional dotenv-syntax file
            environ (dict): Environment to read (defaults to ``os.environ`` after ``load_dotenv``)

        Returns:
            PipelineConfig: Resolved configuration
        """
        if environ is None:
            load_dotenv()
            environ = os.environ
        config = cls()
        config._overlay(_prefixed(environ), "environment")
        if config_file:
            if not os.path.isfile(config_file):
                raise UsageError(f"Config file not found: {config_file}")
            config._overlay(_prefixed(dotenv_values(config_file)), config_file)
        for name, value in (flags or {}).items():
            if value is not None and name in config._field_names():
                setattr(config, name, value if not isinstance(value, str) else config._coerce(name, value, "flags"))
        config.check()
        return config

    @classmethod
    def _field_names(cls) -> List[str]:
        return [f.name for f in fields(cls)]

    def _overlay(self, values: Mapping[str, str], origin: str):
        for name, raw in values.items():
            if name not in self._field_names():
                logger.warning(f"{origin}: ignoring unknown setting {ENV_PREFIX}{name.upper()}")
                continue
            setattr(self, name, self._coerce(name, raw, origin))

    def _coerce(self, name: str, raw: str, origin: str) -> Any:
        default = getattr(type(self)(), name)
        try:
            if name in ("fallback_discount", "alpha", "beam_threshold"):
                return None if raw.lower() in ("", "none") else float(raw)
            if name == "beam_width":
                return None if raw.lower() in ("", "none") else int(raw)
            if name in ("counts", "nbest", "references", "fixed_weights", "components"):
                return [item.strip() for item in raw.split(LIST_SEPARATOR) if item.strip()]
            if name in ("buckets", "mixture_weights"):
                return [float(item) for item in raw.split(LIST_SEPARATOR) if item.strip()]
            if name == "alpha_range":
                lo, hi = raw.split(LIST_SEPARATOR)
                return int(lo), int(hi)
            if isinstance(default, bool):
                if raw.lower() not in ("1", "0", "true", "false", "yes", "no"):
                    raise ValueError(raw)
                return raw.lower() in ("1", "true", "yes")
            if isinstance(default, int):
                return int(raw)
            if isinstance(default, float):
                return float(raw)
            return raw or None
        except ValueError:
            raise UsageError(f"{origin}: invalid value {raw!r} for {name}")

    def check(self):
        """Reject values no command can use."""
        if self.order < 1:
            raise UsageError(f"order must be at least 1, got {self.order}")
        if self.threads < 1:
            raise UsageError(f"threads must be at least 1, got {self.threads}")
        if self.oov_mode not in ("open", "skip"):
            raise UsageError(f"oov_mode must be 'open' or 'skip', got {self.oov_mode!r}")
        if self.model_type not in MODEL_TYPES:
            raise UsageError(f"Unknown model type {self.model_type!r}")
        if self.mixture_mode not in ("static", "dynamic"):
            raise UsageError(f"mixture_mode must be 'static' or 'dynamic', got {self.mixture_mode!r}")
        if any(w < 0 for w in self.mixture_weights):
            raise UsageError(f"mixture weights must be non-negative: {self.mixture_weights}")
        if self.nbest_limit < 1:
            raise UsageError("nbest_limit must be positive")
        if self.log_level.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR"):
            raise UsageError(f"Unknown log level {self.log_level!r}")

    def fixed_weight_map(self) -> Dict[str, float]:
        fixed = {}
        for item in self.fixed_weights:
            name, sep, value = item.rpartition("=")
            if not sep or not name:
                raise UsageError(f"Fixed weight {item!r} is not name=value")
            try:
                fixed[name] = float(value)
            except ValueError:
                raise UsageError(f"Fixed weight {item!r} has a non-numeric value")
        return fixed

    def require(self, *names: str):
        """Raise a usage error naming every missing required setting."""
        missing = [name for name in names if getattr(self, name) in (None, [], "")]
        if missing:
            raise UsageError("Missing required settings: " + ", ".join(f"--{n.replace('_', '-')}" for n in missing))

    def validate_paths(self, *names: str):
        """Check that every named input path exists before any work starts."""
        missing = []
        for name in names:
            value = getattr(self, name)
            for path in value if isinstance(value, list) else [value]:
                if path and not os.path.exists(path):
                    missing.append(f"{name}={path}")
        if missing:
            raise UsageError("Input paths not found: " + ", ".join(missing))

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _prefixed(values: Mapping[str, Optional[str]]) -> Dict[str, str]:
    return {key[len(ENV_PREFIX):].lower(): value for key, value in values.items()
            if key.startswith(ENV_PREFIX) and value is not None}
