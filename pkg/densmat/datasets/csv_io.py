"""
CSV ingestion and export

Comma-separated UTF-8, '.' decimals, optional header. Rows with NaN or Inf
values are dropped and counted; ragged rows are an error.
"""

import csv
import logging
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from densmat.datasets.generators import Dataset, DatasetMeta
from densmat.exceptions import DataError, InvalidArgumentError

logger = logging.getLogger(__name__)

LABEL_COLUMN = "label"


def _resolve_label(label_column: Union[int, str, None], header: Optional[List[str]], width: int) -> Optional[int]:
    if label_column is None:
        return None
    if isinstance(label_column, str) and not label_column.lstrip("-").isdigit():
        if header is None:
            raise InvalidArgumentError(f"label column '{label_column}' named but the file has no header")
        if label_column not in header:
            raise InvalidArgumentError(f"label column '{label_column}' not in header {header}")
        return header.index(label_column)
    index = int(label_column)
    if index < 0:
        index += width
    if not 0 <= index < width:
        raise InvalidArgumentError(f"label column {label_column} out of range for {width} columns")
    return index


def load_csv(
    path: Union[str, Path],
    label_column: Union[int, str, None] = None,
    has_header: bool = False,
) -> Dataset:
    """
    Read a numeric CSV into a Dataset

    Args:
        path: File to read
        label_column: Header name or column index (negative counts from the end) of the labels
        has_header: Treat the first line as column names

    Returns:
        Dataset with 64-bit float features and optional labels

    Raises:
        DataError: Missing or unreadable file, unparsable value or ragged row (with its line number)
    """
    path = Path(path)
    try:
        handle = path.open("r", encoding="utf-8", newline="")
    except OSError as e:
        logger.error(f"Cannot open dataset {path}: {e}")
        raise DataError(f"cannot read '{path}': {e.strerror or e}") from e

    header = None
    rows = []
    width = None
    rejected = 0
    with handle:
        reader = csv.reader(handle)
        try:
            for record in reader:
                line = reader.line_num
                if not record or all(not cell.strip() for cell in record):
                    continue
                if has_header and header is None:
                    header = [cell.strip() for cell in record]
                    width = len(header)
                    continue
                if width is None:
                    width = len(record)
                if len(record) != width:
                    raise DataError(f"expected {width} fields, found {len(record)}", line=line)
                try:
                    values = [float(cell) for cell in record]
                except ValueError as e:
                    raise DataError(f"cannot parse number: {e}", line=line) from e
                if not all(np.isfinite(values)):
                    rejected += 1
                    continue
                rows.append(values)
        except csv.Error as e:
            raise DataError(f"malformed CSV: {e}", line=reader.line_num) from e
        except UnicodeDecodeError as e:
            raise DataError(f"file is not UTF-8: {e}") from e

    if rejected:
        logger.warning(f"Rejected {rejected} row(s) with NaN or Inf values in {path}")
    if not rows:
        raise DataError(f"'{path}' contains no usable rows")

    table = np.array(rows, dtype=np.float64)
    label_index = _resolve_label(label_column, header, table.shape[1])
    columns = header or [f"x{i}" for i in range(table.shape[1])]
    labels = None
    if label_index is not None:
        labels = table[:, label_index].copy()
        keep = [i for i in range(table.shape[1]) if i != label_index]
        table = table[:, keep]
        columns = [columns[i] for i in keep]
    if table.shape[1] == 0:
        raise DataError(f"'{path}' has no feature columns")

    logger.info(f"Loaded {table.shape[0]} rows x {table.shape[1]} features from {path}")
    return Dataset(features=table, labels=labels, meta=DatasetMeta(source=str(path), columns=columns))


def _format(value: float) -> str:
    value = float(value)
    return str(int(value)) if value.is_integer() and abs(value) < 2 ** 53 else repr(value)


def write_csv(dataset: Dataset, path: Union[str, Path], header: bool = True) -> Path:
    """
    Write features (and labels, as a last `label` column) with round-trip float formatting
    """
    path = Path(path)
    columns = dataset.meta.columns or [f"x{i}" for i in range(dataset.d)]
    try:
        with path.open("w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            if header:
                writer.writerow(columns + ([LABEL_COLUMN] if dataset.labels is not None else []))
            for i in range(dataset.n):
                row = [repr(float(v)) for v in dataset.features[i]]
                if dataset.labels is not None:
                    row.append(_format(dataset.labels[i]))
                writer.writerow(row)
    except OSError as e:
        logger.error(f"Cannot write dataset {path}: {e}")
        raise DataError(f"cannot write '{path}': {e.strerror or e}") from e
    return path

