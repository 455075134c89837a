# relaytherm/artifacts.py
"""The single place that writes run artifacts (CSV via pandas, JSON via the json module)."""
import hashlib
import json
import math
from pathlib import Path
from typing import Any, Dict, List

import pandas as pd
import structlog
import yaml

from . import __version__
from .core.errors import ConfigurationError, RelayThermError

logger = structlog.get_logger(__name__)


class ArtifactError(RelayThermError):
    pass


def canonical_json(payload: Any) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), default=_json_default)


def config_hash(config: Dict[str, Any]) -> str:
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


def _json_default(obj):
    if hasattr(obj, "model_dump"):
        return obj.model_dump(mode="json")
    if hasattr(obj, "value"):
        return obj.value
    if hasattr(obj, "tolist"):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _finite(obj):
    # JSON has no inf/nan; write them as strings
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


class OutputWriter:
    """Writes artifacts under `out_dir` and remembers their names for the run ledger."""

    def __init__(self, out_dir: str, config_digest: str, n_modes: int):
        self.out_dir = Path(out_dir)
        self.config_digest = config_digest
        self.n_modes = n_modes
        self.written: List[str] = []
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ArtifactError(f"cannot create output directory {self.out_dir}: {e}") from e

    def meta(self) -> Dict[str, Any]:
        return {"config_hash": self.config_digest, "version": __version__, "n_modes": self.n_modes}

    def write_csv(self, name: str, frame: pd.DataFrame) -> Path:
        path = self.out_dir / name
        try:
            frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
        except OSError as e:
            raise ArtifactError(f"failed to write {path}: {e}") from e
        return self._record(path)

    def write_json(self, name: str, payload: Dict[str, Any], *, embed_meta: bool = True) -> Path:
        path = self.out_dir / name
        body = dict(payload)
        if embed_meta:
            body.update(self.meta())
        text = json.dumps(_finite(json.loads(json.dumps(body, default=_json_default))), sort_keys=True, indent=2)
        try:
            path.write_text(text + "\n", encoding="utf-8", newline="\n")
        except OSError as e:
            raise ArtifactError(f"failed to write {path}: {e}") from e
        return self._record(path)

    def _record(self, path: Path) -> Path:
        self.written.append(path.name)
        logger.debug("artifact_written", path=str(path))
        return path


def read_config_file(path: str) -> Dict[str, Any]:
    """Load a JSON or YAML run configuration file."""
    p = Path(path)
    if not p.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    text = p.read_text(encoding="utf-8")
    try:
        if p.suffix.lower() in {".yaml", ".yml"}:
            data = yaml.safe_load(text)
        else:
            data = json.loads(text)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise ConfigurationError(f"malformed config file {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigurationError(f"config file {path} must hold an object at top level")
    return data

