"""
Calibration CSV ingestion and JSON/CSV emission.

Calibration CSV schema (header required):

    dn,dg,e,sigma0[,cells,aberrations]

One row per calibration point: neutron dose (Gy), gamma dose (Gy), aberration frequency
(aberrations/cell) and its vertical uncertainty. sigma0 may be omitted when cells and aberrations
are given (sigma0 = sqrt(u)/w, e = u/w). Multi-radiation data adds d1..dR dose columns.
"""

from pathlib import Path
from typing import Any, Dict, List, Sequence, Type, TypeVar, Union
import json
import logging
import math
import re

import numpy as np
import pandas as pd
from pydantic import BaseModel, TypeAdapter, ValidationError

from ..config import settings
from ..curves import evaluate_many, point_doses
from ..errors import DataError
from ..models.schemas import DataPoint, DosePosterior, FitResult, SimResult

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
ModelT = TypeVar("ModelT", bound=BaseModel)

CALIBRATION_COLUMNS = ("dn", "dg", "e", "sigma0", "cells", "aberrations")
DOSE_COLUMN = re.compile(r"^d(\d+)$")
COUNT_COLUMNS = ("cells", "aberrations")


def _numeric_frame(frame: pd.DataFrame, columns: Sequence[str]) -> pd.DataFrame:
    """Coerce columns to numbers, naming the first offending row and column"""
    numeric = pd.DataFrame(index=frame.index)
    for column in columns:
        values = pd.to_numeric(frame[column], errors="coerce")
        bad = values.isna() & frame[column].notna() & (frame[column].astype(str).str.strip() != "")
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0]) + 1
            raise DataError(
                f"row {row}, column {column}: {frame[column][bad].iloc[0]!r} is not a number",
                "data_io",
                row=row,
                column=column,
            )
        numeric[column] = values
    return numeric


def read_calibration_csv(path: PathLike) -> List[DataPoint]:
    """
    Load calibration points from a CSV file

    Args:
        path: CSV file following the calibration schema

    Returns:
        List[DataPoint]: Points in file order
    """
    try:
        frame = pd.read_csv(path, dtype=str, skipinitialspace=True)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataError(f"cannot read calibration CSV {path}: {e}", "data_io", original_error=e)
    frame.columns = [str(c).strip().lower() for c in frame.columns]

    has_counts = all(c in frame.columns for c in COUNT_COLUMNS)
    if "sigma0" not in frame.columns and not has_counts:
        raise DataError(
            "calibration CSV has no sigma0 column: add sigma0, or add cells and aberrations columns "
            "for the counting default sqrt(u)/w",
            "data_io",
            column="sigma0",
        )
    if "e" not in frame.columns and not has_counts:
        raise DataError("calibration CSV has no e column and no cells/aberrations to derive it", "data_io", column="e")
    if "dn" not in frame.columns and "dg" not in frame.columns:
        raise DataError("calibration CSV needs dn and dg dose columns", "data_io", column="dn")

    dose_columns = sorted((c for c in frame.columns if DOSE_COLUMN.match(c)), key=lambda c: int(c[1:]))
    columns = [c for c in CALIBRATION_COLUMNS if c in frame.columns] + dose_columns
    numeric = _numeric_frame(frame, columns)

    points = []
    for index, record in enumerate(numeric.to_dict(orient="records"), start=1):
        fields: Dict[str, Any] = {k: v for k, v in record.items() if k in CALIBRATION_COLUMNS and not pd.isna(v)}
        for column in COUNT_COLUMNS:
            if column in fields:
                if fields[column] != math.floor(fields[column]):
                    raise DataError(f"row {index}, column {column}: counts must be integers", "data_io", row=index, column=column)
                fields[column] = int(fields[column])
        if dose_columns:
            fields["doses"] = tuple(record[c] for c in dose_columns)
        try:
            points.append(DataPoint(**fields))
        except ValidationError as e:
            error = e.errors()[0]
            column = str(error["loc"][0]) if error.get("loc") else None
            raise DataError(f"row {index}, column {column}: {error['msg']}", "data_io", row=index, column=column, original_error=e)
    if not points:
        raise DataError(f"calibration CSV {path} has no data rows", "data_io")
    logger.info(f"Loaded {len(points)} calibration points from {path}")
    return points


def read_model_json(path: PathLike, model_type: Type[ModelT]) -> ModelT:
    """Validate a JSON file into a pydantic model (ValidationError propagates)"""
    return model_type.model_validate_json(Path(path).read_text())


def read_json_as(path: PathLike, annotation: Any) -> Any:
    """Validate a JSON file against an arbitrary type, e.g. List[ThetaPrior]"""
    return TypeAdapter(annotation).validate_json(Path(path).read_text())


def write_json(path: PathLike, payload: Dict[str, Any]) -> Path:
    """Write a JSON document; floats keep their shortest round-trip repr"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, allow_nan=True) + "\n")
    logger.info(f"Wrote {path}")
    return path


def _write_frame(path: PathLike, frame: pd.DataFrame) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=settings.output_float_format)
    logger.info(f"Wrote {path} ({len(frame)} rows)")
    return path


def residual_frame(data: Sequence[DataPoint], fit: FitResult) -> pd.DataFrame:
    """dn, dg, e, yfit, weight per calibration point"""
    yfit = evaluate_many(fit.model, point_doses(fit.model, data))
    return pd.DataFrame(
        {
            "dn": [p.dn for p in data],
            "dg": [p.dg for p in data],
            "e": [p.e for p in data],
            "yfit": yfit,
            "weight": list(fit.weights),
        }
    )


def write_residual_csv(path: PathLike, data: Sequence[DataPoint], fit: FitResult) -> Path:
    return _write_frame(path, residual_frame(data, fit))


def write_posterior_csv(path: PathLike, posterior: DosePosterior) -> Path:
    """Plot-ready dose, density and unit-area density columns"""
    frame = pd.DataFrame(
        {
            "dose": posterior.dose,
            "density": posterior.density,
            "normalized_density": posterior.normalized_density(),
        }
    )
    return _write_frame(path, frame)


def write_damage_csv(path: PathLike, result: SimResult) -> Path:
    """Per-cell damage table of the last repetition: cell, u_n, u_g"""
    table = np.asarray(result.damage_table, dtype=np.int64).reshape(-1, 2)
    frame = pd.DataFrame({"cell": np.arange(1, len(table) + 1), "u_n": table[:, 0], "u_g": table[:, 1]})
    return _write_frame(path, frame)
