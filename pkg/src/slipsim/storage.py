"""On-disk formats: comma-separated tables with a header row, JSON documents.

Floats are written with ``repr`` (shortest text that parses back to the same
double), so a table read back is bit-identical to what was written.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from pathlib import Path

import numpy as np

from .accounting import Side

FORMAT_VERSION = 1

TRADE_COLUMNS = [
    "index", "price", "buyer_id", "seller_id", "V_buy_before", "V_sell_before",
    "lambda_before", "delta_p", "sum_dW_residual",
]
EXECUTION_COLUMNS = [
    "agent_id", "side", "i_a", "k_a", "tau", "reference_price", "fill_price", "slippage",
]
_INT_COLUMNS = {"index", "buyer_id", "seller_id", "V_buy_before", "V_sell_before",
                "agent_id", "i_a", "k_a", "tau"}


class ArtifactError(ValueError):
    """Missing, corrupt or incompatible artifact files."""


def trades_name(replicate: int) -> str:
    return f"trades-{replicate:03d}.csv"


def executions_name(replicate: int) -> str:
    return f"executions-{replicate:03d}.csv"


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_table(path: Path, columns: list[str], data: dict[str, np.ndarray]) -> None:
    cols = [data[c] for c in columns]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in zip(*(c.tolist() for c in cols)):
            w.writerow([_fmt(v) for v in row])


def read_table(path: Path, columns: list[str]) -> dict[str, np.ndarray]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ArtifactError(f"cannot read {path}: {exc}") from exc
    if not rows or rows[0] != columns:
        raise ArtifactError(f"{path}: unexpected header {rows[0] if rows else None}")
    body = rows[1:]
    out = {}
    try:
        for j, name in enumerate(columns):
            vals = [r[j] for r in body]
            if name == "side":
                out[name] = np.array([int(Side.from_label(v)) for v in vals], dtype=np.int64)
            elif name in _INT_COLUMNS:
                out[name] = np.array([int(v) for v in vals], dtype=np.int64)
            else:
                out[name] = np.array([float(v) for v in vals], dtype=np.float64)
    except (ValueError, IndexError) as exc:
        raise ArtifactError(f"{path}: malformed row ({exc})") from exc
    return out


def trade_table(run) -> dict[str, np.ndarray]:
    log = run.trade_log()
    return {
        "index": log["index"],
        "price": log["price"],
        "buyer_id": log["buyer_id"],
        "seller_id": log["seller_id"],
        "V_buy_before": log["v_buy_before"],
        "V_sell_before": log["v_sell_before"],
        "lambda_before": log["lambda_before"],
        "delta_p": log["delta_p"],
        "sum_dW_residual": log["sum_dw_residual"],
    }


def execution_file_table(run) -> dict[str, np.ndarray]:
    tab = run.execution_table(completed_only=True)
    return {
        "agent_id": tab["agent_id"],
        "side": np.array([Side(int(s)).label for s in tab["side"]], dtype=object),
        "i_a": tab["arrival_index"],
        "k_a": tab["liquidation_index"],
        "tau": tab["tau"],
        "reference_price": tab["reference_price"],
        "fill_price": tab["fill_price"],
        "slippage": tab["slippage"],
    }


def trade_log_columns(table: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Map a trade file table onto the column names used by :mod:`slipsim.stats`."""
    return {
        "index": table["index"],
        "v_buy_before": table["V_buy_before"],
        "v_sell_before": table["V_sell_before"],
        "delta_p": table["delta_p"],
        "sum_dw_residual": table["sum_dW_residual"],
    }


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _finite(doc):
    # NaN and inf are not JSON; undefined statistics become null
    if isinstance(doc, float):
        return doc if math.isfinite(doc) else None
    if isinstance(doc, dict):
        return {k: _finite(v) for k, v in doc.items()}
    if isinstance(doc, (list, tuple)):
        return [_finite(v) for v in doc]
    return doc


def write_json(path: Path, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_finite(doc), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def read_json(path: Path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ArtifactError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"{path} is not valid JSON: {exc}") from exc


def file_inventory(out_dir: Path, names: list[str]) -> dict[str, dict]:
    return {
        n: {"sha256": sha256_file(out_dir / n), "bytes": os.path.getsize(out_dir / n)}
        for n in names
    }


def load_manifest(in_dir: Path) -> dict:
    manifest = read_json(Path(in_dir) / "manifest.json")
    if manifest.get("artifact") != "slipsim":
        raise ArtifactError("manifest.json does not describe a slipsim run")
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ArtifactError(
            f"artifact format {manifest.get('format_version')} is not supported "
            f"(this build reads format {FORMAT_VERSION})"
        )
    return manifest
