"""Line-delimited JSON logs and aligned text tables."""

import json
from pathlib import Path
from typing import Any, Optional, Sequence, TextIO, Union


class JsonlWriter:
    """Append one JSON object per line; usable as a context manager."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._file: Optional[TextIO] = open(self.path, "w", encoding="utf-8")

    def write(self, entry: dict[str, Any]) -> None:
        if self._file is None:
            raise ValueError(f"{self.path} is closed")
        self._file.write(json.dumps(entry, sort_keys=True, default=_default) + "\n")
        self._file.flush()

    def close(self) -> None:
        if self._file is not None:
            self._file.close()
            self._file = None

    def __enter__(self) -> "JsonlWriter":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self.close()


def _default(value: Any) -> Any:
    # numpy scalars and arrays
    if hasattr(value, "tolist"):
        return value.tolist()
    raise TypeError(f"{type(value).__name__} is not JSON serialisable")


def read_jsonl(path: Union[str, Path]) -> list[dict[str, Any]]:
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def format_table(rows: Sequence[dict[str, Any]], columns: Sequence[str], precision: int = 4) -> str:
    """Render rows as a left-aligned text table with a header rule."""

    def cell(value: Any) -> str:
        if isinstance(value, float):
            return f"{value:.{precision}f}"
        return "" if value is None else str(value)

    body = [[cell(row.get(column)) for column in columns] for row in rows]
    widths = [max([len(column)] + [len(line[i]) for line in body]) for i, column in enumerate(columns)]
    lines = ["  ".join(column.ljust(width) for column, width in zip(columns, widths)).rstrip()]
    lines.append("  ".join("-" * width for width in widths))
    lines.extend("  ".join(value.ljust(width) for value, width in zip(line, widths)).rstrip() for line in body)
    return "\n".join(lines)
