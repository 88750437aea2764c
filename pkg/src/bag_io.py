"""Bag CSV ingestion and the CSV outputs of the command line.

Bag files have the header ``bag_id,f0,...,f{d-1}`` with one sample per row.
"""

import csv
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .exceptions import DataFormatError
from .kernel_core import Bag, check_same_dimension
from .similarity_tests import NeighborGraph

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
ID_COLUMN = "bag_id"
ROUND_TRIP_FORMAT = "%.17g"


def feature_columns(d: int) -> List[str]:
    return [f"f{j}" for j in range(d)]


def short_row_line(path: PathLike, width: int) -> Optional[int]:
    """First line with fewer than ``width`` fields; the parser pads such rows silently."""
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        for fields in reader:
            if fields and len(fields) < width:
                return reader.line_num
    return None


def load_bags_csv(path: PathLike) -> List[Bag]:
    """Read a bag CSV.

    Args:
        path: CSV file with header ``bag_id,f0,...``

    Returns:
        One Bag per distinct bag_id in order of first appearance, with the
        row order preserved inside each bag

    Raises:
        DataFormatError: If the file is missing or empty, has a bad header,
            ragged rows or non-numeric cells
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, na_values=[])
    except FileNotFoundError:
        raise DataFormatError(f"Bag file not found: {path}")
    except pd.errors.EmptyDataError:
        raise DataFormatError(f"Bag file is empty: {path}")
    except pd.errors.ParserError as e:
        raise DataFormatError(f"Ragged rows in {path}: {e}")

    columns = list(frame.columns)
    if not columns or columns[0] != ID_COLUMN:
        raise DataFormatError(f"First column of {path} must be {ID_COLUMN!r}, got {columns[:1]}")
    d = len(columns) - 1
    if d < 1 or columns[1:] != feature_columns(d):
        raise DataFormatError(f"Feature columns of {path} must be f0..f{d - 1}")
    if frame.empty:
        raise DataFormatError(f"Bag file has no rows: {path}")
    line = short_row_line(path, len(columns))
    if line is not None:
        raise DataFormatError(f"Ragged row at line {line} of {path}")

    values = np.empty((len(frame), d))
    for j, column in enumerate(columns[1:]):
        try:
            values[:, j] = frame[column].astype(float).to_numpy()
        except ValueError:
            raise DataFormatError(f"Non-numeric cell in column {column!r} of {path}")
    if not np.all(np.isfinite(values)):
        raise DataFormatError(f"Non-finite value in {path}")

    ids = frame[ID_COLUMN].to_numpy()
    bags = [Bag(str(bag_id), values[ids == bag_id]) for bag_id in pd.unique(ids)]
    logger.info(f"Loaded {len(bags)} bags ({len(ids)} samples, d={d}) from {path}")
    return bags


def bags_to_frame(bags: Sequence[Bag]) -> pd.DataFrame:
    d = check_same_dimension(bags)
    frame = pd.DataFrame(np.vstack([bag.samples for bag in bags]), columns=feature_columns(d))
    frame.insert(0, ID_COLUMN, np.repeat([bag.id for bag in bags], [bag.size for bag in bags]))
    return frame


def write_bags_csv(bags: Sequence[Bag], path: PathLike) -> None:
    """Write bags in the format read by load_bags_csv.

    Floats are written with 17 significant digits, so reading the file back
    gives bit-identical matrices.
    """
    bags_to_frame(bags).to_csv(path, index=False, float_format=ROUND_TRIP_FORMAT)
    logger.info(f"Wrote {len(bags)} bags to {path}")


def standardize(bags: Sequence[Bag]) -> List[Bag]:
    """Centre and scale every feature by its pooled mean and population std.

    Raises:
        DataFormatError: If a feature has zero pooled variance
    """
    check_same_dimension(bags)
    pooled = np.vstack([bag.samples for bag in bags])
    mean = pooled.mean(axis=0)
    std = pooled.std(axis=0)
    constant = np.flatnonzero(std == 0)
    if constant.size:
        raise DataFormatError(f"Feature f{constant[0]} has zero variance; cannot standardize")
    return [Bag(bag.id, (bag.samples - mean) / std) for bag in bags]


def write_matrix_csv(
    matrix: np.ndarray, ids: Sequence[str], path: PathLike, prefix: str = "f"
) -> None:
    """One row per bag: ``bag_id`` then the row of ``matrix``.

    Used for weight matrices (prefix ``w``, one column per bag) and for
    estimated means (prefix ``f``, one column per feature).
    """
    matrix = np.atleast_2d(matrix)
    if matrix.shape[0] != len(ids):
        raise DataFormatError(f"{matrix.shape[0]} rows for {len(ids)} bag ids")
    frame = pd.DataFrame(matrix, columns=[f"{prefix}{j}" for j in range(matrix.shape[1])])
    frame.insert(0, ID_COLUMN, list(ids))
    frame.to_csv(path, index=False, float_format=ROUND_TRIP_FORMAT)


def write_edges_csv(graph: NeighborGraph, ids: Sequence[str], path: PathLike) -> None:
    """Every off-diagonal edge i -> j (j in V_i) as ``bag_id,neighbor_id``."""
    rows, cols = np.nonzero(graph.adjacency)
    keep = rows != cols
    frame = pd.DataFrame(
        {
            ID_COLUMN: [ids[i] for i in rows[keep]],
            "neighbor_id": [ids[j] for j in cols[keep]],
        }
    )
    frame.to_csv(path, index=False)
    logger.info(f"Wrote {int(keep.sum())} edges to {path}")


def write_records_csv(records: Sequence[Dict[str, object]], path: PathLike) -> None:
    """Write a list of flat dicts (report rows) with the keys as header."""
    pd.DataFrame.from_records(list(records)).to_csv(path, index=False)
