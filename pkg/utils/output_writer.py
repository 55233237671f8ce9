"""
CSV and JSON writers for command output.

Files are UTF-8 with LF line endings. Reals carry 17 significant digits;
in JSON a non-finite real is written as null.
"""

import json
import math
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd
from pydantic import BaseModel, ConfigDict

FLOAT_FORMAT = "%.17g"
SCHEMA_PATH = Path(__file__).resolve().parent.parent / "schemas" / "transcript.schema.json"
JSON_TYPES: Dict[str, Any] = {
    "string": str,
    "number": (int, float),
    "integer": int,
    "boolean": bool,
    "object": dict,
    "array": list,
    "null": type(None),
}


class OutputDocument(BaseModel):
    """
    JSON layout shared by every command: the canonical configuration, the
    table rows and a summary block.
    """

    model_config = ConfigDict(extra="forbid")

    command: str
    config: Dict[str, str]
    columns: List[str]
    rows: List[Dict[str, Optional[float]]]
    summary: Dict[str, Optional[float]]


def format_real(value: Optional[float]) -> str:
    if value is None or not math.isfinite(value):
        return "null"
    return FLOAT_FORMAT % value


def _render(value: Any, indent: int) -> str:
    """
    Indented JSON with reals through format_real. json.dumps has no float hook
    and always writes the shortest repr, not the 17 significant digits.
    """
    pad = "  " * (indent + 1)
    close = "  " * indent
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_render(v, indent + 1)}" for k, v in value.items()]
        return "{\n" + ",\n".join(items) + "\n" + close + "}"
    if isinstance(value, list):
        if not value:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in value):
            return "[" + ", ".join(_render(v, indent + 1) for v in value) + "]"
        items = [pad + _render(v, indent + 1) for v in value]
        return "[\n" + ",\n".join(items) + "\n" + close + "]"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format_real(value)
    if value is None:
        return "null"
    if isinstance(value, int):
        return str(value)
    return json.dumps(str(value), ensure_ascii=False)


def render_json(document: OutputDocument) -> str:
    """Serialize a document with 17-digit reals and nulls for non-finite values."""
    return _render(document.model_dump(), 0) + "\n"


def _is_json_type(value: Any, name: str) -> bool:
    if name in ("number", "integer") and isinstance(value, bool):
        return False
    return isinstance(value, JSON_TYPES[name])


def _check_node(value: Any, schema: Dict[str, Any], where: str) -> None:
    types = schema.get("type")
    if types is not None:
        allowed = [types] if isinstance(types, str) else list(types)
        if not any(_is_json_type(value, name) for name in allowed):
            raise ValueError(
                f"{where} should be {' or '.join(allowed)}, got {type(value).__name__}"
            )
    enum = schema.get("enum")
    if enum is not None and value not in enum:
        raise ValueError(f"{where} has unknown value {value!r}")

    if isinstance(value, dict):
        missing = [key for key in schema.get("required", []) if key not in value]
        if missing:
            raise ValueError(f"{where} is missing {', '.join(missing)}")
        properties = schema.get("properties", {})
        extra = schema.get("additionalProperties", True)
        for key, item in value.items():
            if key in properties:
                _check_node(item, properties[key], f"{where}.{key}")
            elif extra is False:
                raise ValueError(f"{where} has unknown key '{key}'")
            elif isinstance(extra, dict):
                _check_node(item, extra, f"{where}.{key}")
    elif isinstance(value, list) and isinstance(schema.get("items"), dict):
        for index, item in enumerate(value):
            _check_node(item, schema["items"], f"{where}[{index}]")


def check_schema(payload: Dict[str, Any], schema: Optional[Dict[str, Any]] = None) -> None:
    """
    Check a decoded document against the checked-in schema, nested rows and
    blocks included. Covers the keywords the schema uses: type, enum,
    properties, required, additionalProperties and items.

    :raises ValueError: Naming the first offending path
    """
    _check_node(payload, schema or load_schema(), "document")


def parse_json(text: str) -> OutputDocument:
    """Read a document back, checked against the schema file and the model."""
    payload = json.loads(text)
    check_schema(payload)
    return OutputDocument.model_validate(payload)


def _emit(text: str, path: Optional[str]) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(text)


def frame_to_csv(frame: pd.DataFrame) -> str:
    return frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def summary_path(path: str) -> str:
    """<stem>_summary.csv beside the table file."""
    target = Path(path)
    return str(target.with_name(f"{target.stem}_summary.csv"))


def write_csv(
    frame: pd.DataFrame, path: Optional[str], summary: Optional[Dict[str, float]] = None
) -> List[str]:
    """
    Write the table and, if given, the one-row summary.

    :param frame: Table with stable column order
    :param path: File path, or None / "-" for stdout
    :param summary: Summary block written to <stem>_summary.csv
    :return: Paths written (empty for stdout)
    """
    table = frame_to_csv(frame)
    block = frame_to_csv(pd.DataFrame([summary])) if summary else ""
    if path is None or path == "-":
        _emit(table + ("\n" + block if block else ""), None)
        return []
    _emit(table, path)
    written = [path]
    if block:
        _emit(block, summary_path(path))
        written.append(summary_path(path))
    return written


def write_json(document: OutputDocument, path: Optional[str]) -> List[str]:
    _emit(render_json(document), path)
    return [] if path is None or path == "-" else [path]


def load_schema() -> Dict[str, Any]:
    with open(SCHEMA_PATH, encoding="utf-8") as handle:
        return json.load(handle)
