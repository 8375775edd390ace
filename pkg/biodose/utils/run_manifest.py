from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Mapping, Optional
import logging

from pydantic import BaseModel

from ..models.schemas import RunManifest

logger = logging.getLogger(__name__)


def _plain(value: Any) -> Any:
    if isinstance(value, BaseModel):
        return value.model_dump(mode="json")
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def build_manifest(
    subcommand: str,
    inputs: Mapping[str, Optional[Path]],
    options: Mapping[str, Any],
    seed: Optional[int] = None,
) -> RunManifest:
    """
    Record what a command ran on, so its output can be traced and re-run

    Args:
        subcommand: CLI subcommand name
        inputs: Input files by role; missing inputs are dropped
        options: Parsed options
        seed: Seed driving every random stream of the run

    Returns:
        RunManifest
    """
    from .. import __version__

    manifest = RunManifest(
        subcommand=subcommand,
        inputs={role: str(path) for role, path in inputs.items() if path is not None},
        options={name: _plain(value) for name, value in options.items()},
        seed=seed,
        version=__version__,
        timestamp=datetime.now(timezone.utc),
    )
    logger.debug(f"Run manifest for {subcommand}: {manifest.inputs}")
    return manifest


def with_manifest(payload: Dict[str, Any], manifest: RunManifest) -> Dict[str, Any]:
    """Embed the manifest into an output document"""
    return {"manifest": manifest.model_dump(mode="json"), **payload}
