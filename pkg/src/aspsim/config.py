"""Run configuration: a single JSON document describing the process, the
grid, the Monte-Carlo sizes and the per-command blocks."""

import dataclasses
import json
import logging
import re
from dataclasses import dataclass, field
from typing import Any, Optional

from aspsim.procs import ProcessSpec, TimeGrid
from aspsim.util import AspError, ConfigError

logger = logging.getLogger(__name__)

FORMATS = ("csv", "json")
LAYOUTS = ("long", "wide")
COMMAND_BLOCKS = ("density", "moments", "copula", "validate", "transform")
TOP_LEVEL_KEYS = ("process", "grid", "paths", "seed", "threads", "output", "progress") + COMMAND_BLOCKS


@dataclass(frozen=True)
class OutputConfig:
    path: Optional[str] = None
    format: str = "csv"
    layout: str = "long"


@dataclass(frozen=True)
class RunConfig:
    """A validated run configuration.

    Attributes:
        process: The process, or None for commands that need no process (h-to-nu transforms)
        grid: Time grid used by the samplers
        paths: Number of Monte-Carlo paths, >= 1
        seed: Unsigned 64-bit master seed
        threads: Worker threads for path blocks
        output: Output path, format and CSV layout
        blocks: Raw command blocks keyed by command name
        source: File the document came from, for line-anchored diagnostics
    """

    process: Optional[ProcessSpec] = None
    grid: TimeGrid = field(default_factory=lambda: TimeGrid.uniform(1))
    paths: int = 1000
    seed: int = 0
    threads: int = 1
    progress: bool = False
    output: OutputConfig = field(default_factory=OutputConfig)
    blocks: dict = field(default_factory=dict)
    source: Optional[str] = None
    text: Optional[str] = field(default=None, repr=False)

    @classmethod
    def from_json(cls, json_path: str) -> "RunConfig":
        """Load and validate a configuration file.

        Raises:
            ConfigError: With the line of the offending key when it can be found
        """
        try:
            with open(json_path, "r", encoding="utf-8") as f:
                text = f.read()
        except OSError as e:
            raise ConfigError("cannot read config: {}".format(e), source=json_path) from e
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError("invalid JSON: {}".format(e.msg), line=e.lineno, source=json_path) from e
        logger.info("loaded config %s", json_path)
        return cls.from_dict(doc, source=json_path, text=text)

    @classmethod
    def from_dict(cls, doc: Any, source: Optional[str] = None, text: Optional[str] = None) -> "RunConfig":
        anchor = _Anchor(source, text)
        if not isinstance(doc, dict):
            raise anchor.error("the config must be a JSON object")
        for key in doc:
            if key not in TOP_LEVEL_KEYS:
                raise anchor.error("unknown key {!r}".format(key), key)

        process = None
        if "process" in doc:
            try:
                process = ProcessSpec.from_dict(doc["process"]) if isinstance(doc["process"], dict) else None
            except AspError as e:
                raise anchor.error("invalid process: {}".format(e), "process") from e
            if process is None:
                raise anchor.error("'process' must be an object", "process")

        grid_doc = doc.get("grid", {"steps": 1})
        try:
            if not isinstance(grid_doc, dict):
                raise ConfigError("'grid' must be an object")
            if "times" in grid_doc:
                grid = TimeGrid(tuple(grid_doc["times"]))
            else:
                steps = grid_doc.get("steps", 1)
                if not isinstance(steps, int) or isinstance(steps, bool):
                    raise ConfigError("'steps' must be an integer")
                grid = TimeGrid.uniform(steps)
        except (AspError, TypeError) as e:
            raise anchor.error("invalid grid: {}".format(e), "grid") from e

        paths = _int_field(doc, "paths", 1000, 1, anchor)
        seed = _int_field(doc, "seed", 0, 0, anchor, upper=2**64 - 1)
        threads = _int_field(doc, "threads", 1, 1, anchor)

        out_doc = doc.get("output", {})
        if not isinstance(out_doc, dict):
            raise anchor.error("'output' must be an object", "output")
        output = OutputConfig(out_doc.get("path"), out_doc.get("format", "csv"), out_doc.get("layout", "long"))
        if output.format not in FORMATS:
            raise anchor.error("output format must be one of {}".format(FORMATS), "format")
        if output.layout not in LAYOUTS:
            raise anchor.error("output layout must be one of {}".format(LAYOUTS), "layout")

        blocks = {}
        for name in COMMAND_BLOCKS:
            if name in doc:
                if not isinstance(doc[name], dict):
                    raise anchor.error("'{}' must be an object".format(name), name)
                blocks[name] = doc[name]
        return cls(process, grid, paths, seed, threads, bool(doc.get("progress", False)), output, blocks, source, text)

    def with_overrides(
        self,
        seed: Optional[int] = None,
        out: Optional[str] = None,
        fmt: Optional[str] = None,
        threads: Optional[int] = None,
    ) -> "RunConfig":
        """Apply command-line flags on top of the file values."""
        changes = {}
        if seed is not None:
            if not 0 <= seed < 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            changes["seed"] = seed
        if threads is not None:
            if threads < 1:
                raise ConfigError("--threads must be >= 1")
            changes["threads"] = threads
        if out is not None or fmt is not None:
            if fmt is not None and fmt not in FORMATS:
                raise ConfigError("--format must be one of {}".format(FORMATS))
            changes["output"] = dataclasses.replace(
                self.output, path=out if out is not None else self.output.path, format=fmt or self.output.format
            )
        return dataclasses.replace(self, **changes)

    def block(self, name: str) -> dict:
        return dict(self.blocks.get(name, {}))

    def require_process(self) -> ProcessSpec:
        if self.process is None:
            raise self.error("this command needs a 'process' block", "process")
        return self.process

    def error(self, message: str, key: Optional[str] = None) -> ConfigError:
        """A ConfigError anchored at the first line mentioning ``key``."""
        return _Anchor(self.source, self.text).error(message, key)


class _Anchor:
    def __init__(self, source: Optional[str], text: Optional[str]) -> None:
        self.source = source
        self.text = text

    def line_of(self, key: Optional[str]) -> Optional[int]:
        if key is None or self.text is None:
            return None
        pattern = re.compile(r'"{}"\s*:'.format(re.escape(key)))
        for i, line in enumerate(self.text.splitlines(), start=1):
            if pattern.search(line):
                return i
        return None

    def error(self, message: str, key: Optional[str] = None) -> ConfigError:
        return ConfigError(message, line=self.line_of(key), source=self.source)


def _int_field(doc: dict, key: str, default: int, lower: int, anchor: _Anchor, upper: Optional[int] = None) -> int:
    value = doc.get(key, default)
    if not isinstance(value, int) or isinstance(value, bool) or value < lower or (upper is not None and value > upper):
        bound = ">= {}".format(lower) if upper is None else "in [{}, {}]".format(lower, upper)
        raise anchor.error("'{}' must be an integer {}, got {!r}".format(key, bound, value), key)
    return value
