"""
Reading and writing of pipeline artifacts.

Matrices go to comma-delimited text (missing values as empty fields) with a
leading `# params_hash:` comment line. Key-value documents are JSON. Matrix
snapshots for quick inspection are written as 8-bit grayscale PNG files.
"""

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

import numpy as np
import pandas as pd
from PIL import Image

FLOAT_FORMAT = "%.17g"


def _to_builtin(value: Any) -> Any:
    """Convert numpy scalars/arrays (recursively) into JSON-friendly objects."""
    if isinstance(value, dict):
        return {str(k): _to_builtin(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_builtin(v) for v in value]
    if isinstance(value, np.ndarray):
        return _to_builtin(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if np.isfinite(value) else None
    if isinstance(value, Path):
        return str(value)
    return value


def fingerprint(settings: Dict[str, Any], *arrays: np.ndarray) -> str:
    """SHA-256 over canonical JSON of the settings plus raw array bytes."""
    digest = hashlib.sha256()
    digest.update(json.dumps(_to_builtin(settings), sort_keys=True).encode("utf-8"))
    for arr in arrays:
        arr = np.ascontiguousarray(arr)
        digest.update(str(arr.dtype).encode("ascii"))
        digest.update(str(arr.shape).encode("ascii"))
        digest.update(arr.tobytes())
    return digest.hexdigest()


def write_matrix(path: Path, matrix: np.ndarray, params_hash: str = "",
                 columns: Optional[Sequence[str]] = None) -> Path:
    """Write a 2-D array as delimited text; NaN becomes an empty field."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(np.atleast_2d(np.asarray(matrix, dtype=float)))
    header = list(columns) if columns is not None else False
    with open(path, "w", newline="") as f:
        f.write(f"# params_hash: {params_hash}\n")
        frame.to_csv(f, header=header, index=False, na_rep="",
                     float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def read_matrix(path: Path, has_header: bool = False) -> np.ndarray:
    """Read a matrix written by write_matrix; empty fields come back as NaN."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Matrix file does not exist: {path}")
    frame = pd.read_csv(path, comment="#", header=0 if has_header else None,
                        skip_blank_lines=True)
    return frame.to_numpy(dtype=float)


def write_table(path: Path, frame: pd.DataFrame, params_hash: str = "") -> Path:
    """Write a labelled table (header row, no index) with a params_hash line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        f.write(f"# params_hash: {params_hash}\n")
        frame.to_csv(f, index=False, na_rep="", float_format=FLOAT_FORMAT,
                     lineterminator="\n")
    return path


def write_document(path: Path, document: Dict[str, Any]) -> Path:
    """Write a key-value document as indented, key-sorted JSON."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(_to_builtin(document), f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def read_document(path: Path) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Document does not exist: {path}")
    with open(path) as f:
        return json.load(f)


def save_heatmap_image(path: Path, matrix: np.ndarray,
                       vmin: Optional[float] = None,
                       vmax: Optional[float] = None) -> Path:
    """
    Save a matrix as a grayscale PNG, one pixel per entry, lighter = larger.
    Missing entries are drawn black.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    values = np.asarray(matrix, dtype=float)
    finite = np.isfinite(values)
    if finite.any():
        lo = np.min(values[finite]) if vmin is None else vmin
        hi = np.max(values[finite]) if vmax is None else vmax
    else:
        lo, hi = 0.0, 1.0
    span = hi - lo if hi > lo else 1.0
    scaled = np.clip((np.where(finite, values, lo) - lo) / span, 0.0, 1.0)
    pixels = np.where(finite, np.rint(scaled * 255.0), 0).astype(np.uint8)
    Image.fromarray(pixels).convert("L").save(path)
    return path
