"""Cell typing rules shared by prompt rendering, execution and features.

A cell is numeric when it parses after stripping a leading currency sign,
a trailing percent sign and thousands separators ("$155" is the integer
155). Empty strings and None both count as missing.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence, Union

from .core import Cell, Table

ColumnType = str  # "integer" | "decimal" | "text"

INTEGER = "integer"
DECIMAL = "decimal"
TEXT = "text"


def strip_numeric_symbols(text: str) -> str:
    s = text.strip()
    if s.startswith("$"):
        s = s[1:]
    if s.endswith("%"):
        s = s[:-1]
    return s.replace(",", "").strip()


def parse_number(cell: Cell) -> Optional[Union[int, float]]:
    """Parse a cell as a number, or None when it is not numeric."""
    if isinstance(cell, bool) or cell is None:
        return None
    if isinstance(cell, (int, float)):
        return cell if not isinstance(cell, float) or math.isfinite(cell) else None
    s = strip_numeric_symbols(cell)
    if not s or "_" in s:
        return None
    try:
        return int(s)
    except ValueError:
        pass
    try:
        value = float(s)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


def is_missing(cell: Cell) -> bool:
    return cell is None or (isinstance(cell, str) and not cell.strip())


def classify_cell(cell: Cell) -> str:
    """Classify a cell as 'int', 'float', 'str' or 'nan'."""
    if is_missing(cell):
        return "nan"
    number = parse_number(cell)
    if number is None:
        return "str"
    return "int" if isinstance(number, int) else "float"


def infer_column_types(table: Table) -> list[ColumnType]:
    """Column-level typing: integer if all non-missing cells parse as ints,
    decimal if all parse numerically, else text."""
    types: list[ColumnType] = []
    for idx in range(table.n_cols):
        classes = {
            classify_cell(row[idx]) for row in table.rows if not is_missing(row[idx])
        }
        if not classes:
            types.append(TEXT)
        elif classes == {"int"}:
            types.append(INTEGER)
        elif classes <= {"int", "float"}:
            types.append(DECIMAL)
        else:
            types.append(TEXT)
    return types


def convert_cell(cell: Cell, column_type: ColumnType) -> Cell:
    """Convert a cell for execution: typed numerics, None for missing."""
    if is_missing(cell):
        return None
    if column_type == INTEGER:
        number = parse_number(cell)
        return int(number) if number is not None else None
    if column_type == DECIMAL:
        number = parse_number(cell)
        return float(number) if number is not None else None
    return cell if isinstance(cell, str) else str(cell)


def typed_rows(table: Table, types: Optional[Sequence[ColumnType]] = None) -> list[list[Cell]]:
    """Row-major converted cells, ready for a dataframe or SQL relation."""
    if types is None:
        types = infer_column_types(table)
    return [
        [convert_cell(cell, types[idx]) for idx, cell in enumerate(row)]
        for row in table.rows
    ]
