"""Run configuration: TOML file with CLI flag overrides.

Sections: [paths] corpus/propositions/dataset/workdir, [run]
granularity/k/l_grid/shards/seed/dim, [provider] kind/endpoint/model/
batch_size/normalize, [popularity] bucket_edges/bm25_k1/bm25_b/top_n.
The key set is frozen by golden tests.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(Exception):
    """Unusable run configuration."""


@dataclass
class RunConfig:
    corpus: Path | None = None
    propositions: Path | None = None
    dataset: Path | None = None
    workdir: Path = Path("out")

    granularity: str = "proposition"
    k: list[int] = field(default_factory=lambda: [1, 5, 20])
    l_grid: list[int] = field(default_factory=lambda: [100, 500])
    shards: int = 8
    seed: int = 42
    dim: int = 256

    provider: str = "deterministic"
    endpoint: str = ""
    model: str = ""
    provider_path: Path | None = None
    batch_size: int = 64
    normalize: bool = True

    bucket_edges: list[int] = field(
        default_factory=lambda: [1, 3, 7, 15, 31, 63, 127, 255, 511, 1023]
    )
    bm25_k1: float = 0.9
    bm25_b: float = 0.4
    popularity_top_n: int = 1000

    def validate(self) -> None:
        if not self.k:
            raise ConfigError("k list must be nonempty")
        if not self.l_grid:
            raise ConfigError("l grid must be nonempty")
        if self.granularity not in ("passage", "sentence", "proposition"):
            raise ConfigError(f"unknown granularity {self.granularity!r}")
        if self.provider not in ("deterministic", "file", "remote"):
            raise ConfigError(f"unknown provider {self.provider!r}")
        if self.provider == "remote" and not self.endpoint:
            raise ConfigError("remote provider needs --endpoint")
        for path in (self.corpus, self.propositions, self.dataset):
            if path is not None and not Path(path).exists():
                raise ConfigError(f"input path does not exist: {path}")


_PATH_KEYS = {"corpus", "propositions", "dataset", "workdir", "provider_path"}
_SECTION_KEYS = {
    "paths": {"corpus", "propositions", "dataset", "workdir"},
    "run": {"granularity", "k", "l_grid", "shards", "seed", "dim"},
    "provider": {"kind", "endpoint", "model", "path", "batch_size", "normalize"},
    "popularity": {"bucket_edges", "bm25_k1", "bm25_b", "top_n"},
}
_RENAMES = {
    ("provider", "kind"): "provider",
    ("provider", "path"): "provider_path",
    ("popularity", "top_n"): "popularity_top_n",
}


def load_config(path: str | Path) -> RunConfig:
    try:
        with open(path, "rb") as handle:
            raw = tomllib.load(handle)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid config {path}: {exc}") from exc

    config = RunConfig()
    known_fields = {f.name for f in fields(RunConfig)}
    for section, keys in raw.items():
        if section not in _SECTION_KEYS:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(keys, dict):
            raise ConfigError(f"section [{section}] must hold key/value pairs")
        for key, value in keys.items():
            if key not in _SECTION_KEYS[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            name = _RENAMES.get((section, key), key)
            assert name in known_fields
            if name in _PATH_KEYS:
                value = Path(value)
            setattr(config, name, value)
    return config
