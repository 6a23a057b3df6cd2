"""Shared helpers for the experiment scripts."""

import json
import os
from pathlib import Path


def output_dir(name: str) -> Path:
    out = Path(os.environ.get("NMST_OUTPUT_DIR", "runs")) / name
    out.mkdir(parents=True, exist_ok=True)
    return out


def dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, default=_plain), encoding="utf-8")
    print(f"wrote {path}")


def _plain(x):
    if hasattr(x, "item"):
        return x.item()
    if hasattr(x, "tolist"):
        return x.tolist()
    raise TypeError(type(x))
