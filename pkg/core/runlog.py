import json
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Optional, Union

from rich.console import Console
from rich.logging import RichHandler


EVENTS_FILE = "events.jsonl"


class JsonEventFormatter(logging.Formatter):
    """One JSON object per line: ts, level, logger, event and any structured fields."""

    def format(self, record: logging.LogRecord) -> str:
        payload = {
            "ts": datetime.fromtimestamp(record.created, tz=timezone.utc).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "event": record.getMessage(),
        }
        payload.update(getattr(record, "fields", {}) or {})
        if record.exc_info:
            payload["exception"] = self.formatException(record.exc_info)
        return json.dumps(payload, default=str)


def configure_logging(level: Union[str, int] = "INFO", events_path: Optional[Path] = None) -> None:
    root = logging.getLogger()
    for handler in list(root.handlers):
        if getattr(handler, "_hrldx", False):
            root.removeHandler(handler)
            handler.close()

    console_handler = RichHandler(console=Console(stderr=True), show_path=False, rich_tracebacks=True)
    console_handler._hrldx = True
    root.addHandler(console_handler)

    if events_path is not None:
        events_path = Path(events_path)
        events_path.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(events_path, encoding="utf-8")
        file_handler.setFormatter(JsonEventFormatter())
        file_handler._hrldx = True
        root.addHandler(file_handler)

    root.setLevel(level.upper() if isinstance(level, str) else level)


def log_event(logger: logging.Logger, event: str, level: int = logging.INFO, **fields: Any) -> None:
    if fields:
        summary = " ".join(f"{key}={value}" for key, value in fields.items())
        logger.log(level, f"{event} {summary}", extra={"fields": {"event_name": event, **fields}})
    else:
        logger.log(level, event, extra={"fields": {"event_name": event}})
