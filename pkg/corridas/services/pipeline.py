import logging
from typing import Optional

from .config import RunConfig
from .manifest import RunManifest, build_manifest, write_manifest
from .stages import STAGE_ORDER, RunContext, generate_series, run_stage

logger = logging.getLogger(__name__)


def run_pipeline(config: RunConfig, force: bool = False, context: Optional[RunContext] = None) -> RunManifest:
    """
    Runs every stage in order and writes ``manifest.json``. When the series file
    is missing a synthetic one is generated first from the run seed.
    """

    ctx = context or RunContext(config=config)
    config.output_dir.mkdir(parents=True, exist_ok=True)
    if not config.series_path.is_file():
        logger.info("Serie no encontrada en %s; se genera una sintética (semilla %s).", config.series_path, config.seed)
        generate_series(config)

    for name in STAGE_ORDER:
        run_stage(ctx, name, force=force)

    manifest = build_manifest(ctx)
    write_manifest(manifest, config.output_dir)
    return manifest


__all__ = ["run_pipeline"]
