# relaytherm/run_ledger.py
import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, List, Optional

import structlog

from . import __version__

logger = structlog.get_logger(__name__)


class RunLedger:
    """Append-only record of CLI runs, one JSON line per run in `<out_dir>/runs.jsonl`.

    This is the only place a wall-clock timestamp is stored; artifacts stay
    byte-identical between repeated runs.
    """

    FILENAME = "runs.jsonl"

    def __init__(self, out_dir: str):
        self.path = Path(out_dir) / self.FILENAME

    def log_run(
        self,
        command: str,
        config_hash: Optional[str],
        status: str,
        exit_code: int,
        artifacts: Optional[List[str]] = None,
        message: Optional[str] = None,
        **_: Any,
    ) -> None:
        """Appends one run entry. Ledger failures never fail the run itself."""
        entry = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "command": command,
            "config_hash": config_hash,
            "version": __version__,
            "status": status,
            "exit_code": exit_code,
            "artifacts": list(artifacts or []),
        }
        if message:
            entry["message"] = message
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8", newline="\n") as fh:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")
        except OSError as e:
            logger.error("run_ledger_write_failed", path=str(self.path), error=str(e))

    def entries(self) -> List[dict]:
        if not self.path.is_file():
            return []
        with self.path.open(encoding="utf-8") as fh:
            return [json.loads(line) for line in fh if line.strip()]
