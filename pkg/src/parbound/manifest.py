"""Run manifests: TOML text to a validated experiment configuration.

Layout::

    experiment = "hopf"
    output = "out/hopf"        # relative paths resolve against the manifest
    seed = 0
    resolutions = [32, 64]
    plots = true

    [config]                   # any ExperimentConfig field except kind/seed/resolutions
    rho_min = 0.0078125
    [config.domain]
    family = "flat"
"""

import hashlib
import re
from dataclasses import dataclass, fields
from pathlib import Path

import tomli
import tomli_w

from .errors import ConfigError
from .harness.config import EXPERIMENTS, ExperimentConfig

TOP_KEYS = ("experiment", "output", "seed", "resolutions", "plots", "config")
CONFIG_KEYS = tuple(f.name for f in fields(ExperimentConfig) if f.name not in
                    ("kind", "seed", "resolutions"))


@dataclass
class RunManifest:
    experiment: str
    config: ExperimentConfig
    output: str = "out"
    seed: int = 0
    resolutions: tuple = (32, 64)
    plots: bool = True
    source: str = None            # path the manifest was read from, if any

    def output_dir(self):
        out = Path(self.output)
        if not out.is_absolute() and self.source is not None:
            out = (Path(self.source).resolve().parent / out).resolve()
        return out

    def to_record(self):
        cfg = self.config.to_record()
        for k in ("kind", "seed", "resolutions"):
            cfg.pop(k, None)
        return {"experiment": self.experiment, "output": self.output, "seed": self.seed,
                "resolutions": list(self.resolutions), "plots": self.plots, "config": cfg}

    def digest(self):
        """SHA-256 of the canonical serialization."""
        return hashlib.sha256(serialize(self).encode("utf-8")).hexdigest()

    def __eq__(self, other):
        return isinstance(other, RunManifest) and self.to_record() == other.to_record()


def _line_of(text, key, section=None):
    """1-based line of ``key = ...``, searched inside ``[section]`` when given."""
    lines = text.splitlines()
    start, current = 0, None
    pat = re.compile(rf"^\s*(\"?){re.escape(key)}\1\s*=")
    for i, ln in enumerate(lines, 1):
        head = re.match(r"^\s*\[([^\]]+)\]", ln)
        if head:
            current = head.group(1).strip()
            if section is not None and current == section:
                start = i
            continue
        if (section is None and current is None) or (section is not None and current == section):
            if pat.match(ln):
                return i
    return start or None


def parse_manifest(text, source=None):
    """Parse and validate manifest text.

    Raises
    ------
    ConfigError
        On syntax errors, unknown keys, wrong types or range violations;
        the message names the key and, where it can be located, the line.
    """
    try:
        rec = tomli.loads(text)
    except tomli.TOMLDecodeError as err:
        m = re.search(r"line (\d+)", str(err))
        raise ConfigError(f"malformed manifest: {err}",
                          line=int(m.group(1)) if m else None) from err
    for k in rec:
        if k not in TOP_KEYS:
            raise ConfigError(f"unknown key {k!r}", key=k, line=_line_of(text, k))
    if "experiment" not in rec:
        raise ConfigError("missing key 'experiment'", key="experiment")
    kind = rec["experiment"]
    if kind not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {kind!r}; choose from {', '.join(EXPERIMENTS)}",
                          key="experiment", line=_line_of(text, "experiment"))
    cfg = rec.get("config", {})
    if not isinstance(cfg, dict):
        raise ConfigError("'config' must be a table", key="config", line=_line_of(text, "config"))
    for k in cfg:
        if k not in CONFIG_KEYS:
            raise ConfigError(f"unknown key {k!r}", key=f"config.{k}",
                              line=_line_of(text, k, "config"))
    seed = rec.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("seed must be a nonnegative integer", key="seed",
                          line=_line_of(text, "seed"))
    res = rec.get("resolutions", [32, 64])
    if not isinstance(res, list) or not all(isinstance(v, int) and not isinstance(v, bool)
                                            for v in res):
        raise ConfigError("resolutions must be a list of integers", key="resolutions",
                          line=_line_of(text, "resolutions"))
    plots = rec.get("plots", True)
    if not isinstance(plots, bool):
        raise ConfigError("plots must be a boolean", key="plots", line=_line_of(text, "plots"))
    output = rec.get("output", "out")
    if not isinstance(output, str) or not output:
        raise ConfigError("output must be a nonempty path", key="output",
                          line=_line_of(text, "output"))
    try:
        config = ExperimentConfig(kind=kind, seed=seed, resolutions=list(res), **cfg)
    except ConfigError as err:
        key = err.key or ""
        leaf = key.split(".")[0]
        line = _line_of(text, leaf, "config") if leaf in cfg else _line_of(text, leaf)
        raise ConfigError(err.message, key=key, line=line) from err
    except (TypeError, ValueError, KeyError) as err:
        raise ConfigError(f"invalid config: {err}", key="config") from err
    return RunManifest(kind, config, output, seed, tuple(res), plots, source)


def read_manifest(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read manifest {path}: {err}") from err
    return parse_manifest(text, source=str(path))


def serialize(manifest):
    """Canonical TOML text (sorted keys) that parses back to an equal manifest."""
    return tomli_w.dumps(_sorted(manifest.to_record()))


def _sorted(d):
    return {k: _sorted(v) if isinstance(v, dict) else v for k, v in sorted(d.items())}
