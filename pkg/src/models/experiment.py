from pathlib import Path

import yaml

from config.constants import SUBCOMMANDS
from config.settings import DEFAULT_SEED, OUTPUT_DIR

REPORT_FORMATS = ("csv", "json")

# Spellings accepted in config files for parameters whose CLI dest differs
ALIASES = {"lambda": "lam"}


def normalize_key(key: str) -> str:
    key = str(key).replace("-", "_")
    return ALIASES.get(key, key)


class ExperimentConfig:
    """
    Parameters of one CLI run.

    Values come from three layers: per-subcommand defaults, an optional YAML
    file, and command-line flags, each overriding the one before.
    """

    def __init__(
        self,
        subcommand: str,
        parameters: dict | None = None,
        seed: int = DEFAULT_SEED,
        output=None,
        fmt: str = "json",
        workers: int | None = None,
    ):
        if subcommand not in SUBCOMMANDS:
            raise ValueError(f"Unknown subcommand {subcommand!r}")
        if fmt not in REPORT_FORMATS:
            raise ValueError(f"Unknown format {fmt!r}; expected csv or json")
        if int(seed) != seed or seed < 0:
            raise ValueError(f"seed must be a nonnegative integer, got {seed!r}")
        if workers is not None and workers < 1:
            raise ValueError(f"workers must be at least 1, got {workers}")

        self.subcommand = subcommand
        self.parameters = dict(parameters or {})
        self.seed = int(seed)
        self.output = Path(output) if output else None
        self.fmt = fmt
        self.workers = workers

    @staticmethod
    def read_yaml(path) -> dict:
        """Flat mapping of parameter names to values from a YAML file."""
        with Path(path).open(encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
        if not isinstance(data, dict):
            raise ValueError(f"{path} must contain a mapping of parameters")
        return {normalize_key(k): v for k, v in data.items()}

    @classmethod
    def from_sources(cls, subcommand: str, cli: dict, defaults: dict | None = None, config_path=None):
        """Merge defaults, the YAML file at `config_path` and CLI values (None means unset)."""
        merged = dict(defaults or {})
        if config_path:
            merged.update(cls.read_yaml(config_path))
        merged.update({k: v for k, v in cli.items() if v is not None})

        seed = merged.pop("seed", DEFAULT_SEED)
        output = merged.pop("output", None)
        fmt = merged.pop("format", "json")
        workers = merged.pop("workers", None)
        return cls(subcommand, merged, seed=seed, output=output, fmt=fmt, workers=workers)

    def get(self, name: str, default=None):
        return self.parameters.get(name, default)

    def require(self, name: str):
        value = self.parameters.get(name)
        if value is None:
            raise ValueError(f"{self.subcommand} needs --{name.replace('_', '-')}")
        return value

    @property
    def output_path(self) -> Path:
        return self.output or OUTPUT_DIR / f"{self.subcommand}.{self.fmt}"

    def to_dict(self):
        return {
            "subcommand": self.subcommand,
            "seed": self.seed,
            "format": self.fmt,
            "output": str(self.output_path),
            "parameters": dict(self.parameters),
        }
