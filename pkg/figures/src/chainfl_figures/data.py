"""Loading and filtering sweep artifacts."""

from __future__ import annotations

from pathlib import Path

import pandas as pd

from .schema import (
    BLOCKS_COLUMNS,
    INDEX_BASE_COLUMNS,
    SchemaError,
    SelectionError,
    require_columns,
)


def load_index(index_path: Path | str) -> pd.DataFrame:
    index_path = Path(index_path)
    if not index_path.exists():
        raise SchemaError(f"index file not found: {index_path}")
    frame = pd.read_csv(index_path)
    require_columns(frame, INDEX_BASE_COLUMNS, str(index_path))
    return frame


def select_runs(index: pd.DataFrame, filter_expr: str | None) -> pd.DataFrame:
    """Successful runs matching the filter, in run_id order.

    The filter is a boolean expression over index columns, e.g.
    ``"c_link_bps == 1e6 and n_clients == 100"``.
    """
    selected = index[index["status"] == "ok"]
    if filter_expr:
        try:
            selected = selected.query(filter_expr)
        except Exception as exc:
            raise SelectionError(f"bad filter expression {filter_expr!r}: {exc}") from exc
    if selected.empty:
        detail = f" matching {filter_expr!r}" if filter_expr else ""
        raise SelectionError(f"filter selected no successful runs{detail}")
    return selected.sort_values("run_id").reset_index(drop=True)


def load_blocks(index_path: Path | str, run_id: str) -> pd.DataFrame:
    """One run's blocks.csv, resolved relative to the index file."""
    blocks_path = Path(index_path).parent / run_id / "blocks.csv"
    if not blocks_path.exists():
        raise SchemaError(f"blocks file not found: {blocks_path}")
    frame = pd.read_csv(blocks_path)
    require_columns(frame, BLOCKS_COLUMNS, str(blocks_path))
    return frame


def main_chain_blocks(blocks: pd.DataFrame) -> pd.DataFrame:
    return blocks[blocks["on_main_chain"] == 1].sort_values("depth")
