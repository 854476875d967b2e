"""On-disk formats: dataset containers, run configs, and the metrics CSV.

A dataset container is a directory with meta.json plus one raw array file
per field (little-endian float64, row-major, leading sample axis). Raw
arrays keep the format language-neutral and memory-mappable; the JSON side
carries everything needed to regenerate the container bit-exactly.

Run configs are flat `key = value` text; unknown keys are rejected so a
typo cannot silently change an experiment.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
DTYPE = "<f8"


class ContainerFormatError(ValueError):
    """meta.json is missing, malformed, or from an unknown format version."""


@dataclasses.dataclass
class DatasetContainer:
    path: Path
    meta: dict
    fields: dict[str, np.ndarray]

    @property
    def pde(self) -> str:
        return self.meta["dataset"]["pde"]

    @property
    def n_train(self) -> int:
        return self.meta["dataset"]["n_train"]

    @property
    def n_test(self) -> int:
        return self.meta["dataset"]["n_test"]


def write_container(out_dir, dataset_meta: dict, fields: dict[str, np.ndarray]) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    meta = {
        "format_version": FORMAT_VERSION,
        "byte_order": "little",
        "field_shapes": {k: list(v.shape) for k, v in fields.items()},
        "dataset": dataset_meta,
    }
    for name, arr in fields.items():
        np.ascontiguousarray(arr, dtype=np.float64).astype(DTYPE).tofile(
            out_dir / f"{name}.f64")
    (out_dir / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return out_dir


def read_container(path) -> DatasetContainer:
    path = Path(path)
    meta_path = path / "meta.json"
    if not meta_path.exists():
        raise ContainerFormatError(f"no meta.json under {path}")
    meta = json.loads(meta_path.read_text())
    version = meta.get("format_version")
    if version != FORMAT_VERSION:
        raise ContainerFormatError(
            f"unknown container format_version {version!r} (supported: {FORMAT_VERSION})")
    if meta.get("byte_order") != "little":
        raise ContainerFormatError(f"unsupported byte order {meta.get('byte_order')!r}")
    fields = {}
    for name, shape in meta["field_shapes"].items():
        fpath = path / f"{name}.f64"
        expected = 8 * int(np.prod(shape))
        actual = fpath.stat().st_size
        if actual != expected:
            raise ContainerFormatError(
                f"{fpath.name}: {actual} bytes on disk, {expected} expected for shape {shape}")
        fields[name] = np.fromfile(fpath, dtype=DTYPE).reshape(shape)
    return DatasetContainer(path=path, meta=meta, fields=fields)


# ---------------------------------------------------------------------------
# flat key = value run configs


def parse_run_config(text: str, allowed_keys: set[str]) -> dict[str, str]:
    """Parse `key = value` lines; '#' starts a comment; unknown keys rejected."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in allowed_keys:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        if key in out:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def parse_grid_spec(text: str, allowed_keys: set[str]) -> list[dict[str, str]]:
    """Blank-line separated blocks of `key = value` lines, one block per cell."""
    cells = []
    for block in text.split("\n\n"):
        stripped = "\n".join(
            ln for ln in block.splitlines() if ln.split("#", 1)[0].strip())
        if not stripped:
            continue
        cells.append(parse_run_config(stripped, allowed_keys))
    if not cells:
        raise ValueError("grid spec contains no cells")
    return cells


def format_run_config(entries: dict) -> str:
    return "".join(f"{k} = {v}\n" for k, v in entries.items())


def config_hash(entries: dict) -> str:
    canonical = json.dumps(entries, sort_keys=True, default=str)
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def source_hash() -> str:
    """Hash of the package sources, for stamping runs and result caches."""
    root = Path(__file__).parent
    digest = hashlib.sha256()
    for py in sorted(root.rglob("*.py")) + sorted(root.rglob("*.pyx")):
        digest.update(py.name.encode())
        digest.update(py.read_bytes())
    return digest.hexdigest()[:16]


# ---------------------------------------------------------------------------
# metrics CSV

CSV_COLUMNS = [
    "method", "scales", "intra_sharing", "iter_sharing", "skip",
    "train_error_mean", "train_error_std", "test_error_mean", "test_error_std",
    "seconds_per_epoch", "n_params", "n_seeds", "run_key", "status",
]


def write_metrics_rows(csv_path, rows: list[dict]) -> None:
    """Append rows; a row whose run_key already exists is overwritten."""
    csv_path = Path(csv_path)
    existing: list[dict] = []
    if csv_path.exists():
        existing = read_metrics_rows(csv_path)
    by_key = {r["run_key"]: r for r in existing}
    for row in rows:
        by_key[row["run_key"]] = row
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(CSV_COLUMNS)]
    for row in by_key.values():
        lines.append(",".join(str(row.get(col, "")) for col in CSV_COLUMNS))
    csv_path.write_text("\n".join(lines) + "\n")


def read_metrics_rows(csv_path) -> list[dict]:
    lines = Path(csv_path).read_text().strip().splitlines()
    header = lines[0].split(",")
    if header != CSV_COLUMNS:
        raise ValueError(f"unexpected CSV header in {csv_path}")
    return [dict(zip(header, ln.split(","))) for ln in lines[1:]]
