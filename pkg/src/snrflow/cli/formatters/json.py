"""JSON formatter"""

import json
from typing import Any

from pydantic import BaseModel
from rich.console import Console


def to_jsonable(report: Any) -> Any:
    if isinstance(report, BaseModel):
        return report.model_dump(mode="json")
    if isinstance(report, (list, tuple)):
        return [to_jsonable(item) for item in report]
    if isinstance(report, dict):
        return {key: to_jsonable(value) for key, value in report.items()}
    return report


def format_json(report: Any, console: Console) -> None:
    """Format report as JSON"""
    console.print(json.dumps(to_jsonable(report), indent=2, default=str), markup=False)
