import json
import logging
from dataclasses import asdict, dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, Optional

from escenarios.services.checkpoint import CHECKPOINT_VERSION

from .config import RunConfig
from .stages import CACHE_FILENAME, STAGE_ORDER, STAGES, RunContext, derived_seed, file_digest

logger = logging.getLogger(__name__)

MANIFEST_FILENAME = "manifest.json"
TRACKED_PACKAGES = (
    "numpy",
    "pandas",
    "scipy",
    "scikit-learn",
    "torch",
    "cvxpy",
    "clarabel",
    "networkx",
    "joblib",
    "Django",
)


def package_versions() -> Dict[str, Optional[str]]:
    versions = {}
    for name in TRACKED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = None
    return versions


@dataclass
class RunManifest:
    config_hash: str
    config: Dict[str, Any]
    seeds: Dict[str, int]
    versions: Dict[str, Any]
    timings: Dict[str, float]
    stages: Dict[str, str]
    outputs: Dict[str, str]
    tariff: Dict[str, Any]
    run_id: str = ""
    details: Dict[str, Any] = field(default_factory=dict)

    def as_dict(self) -> Dict[str, Any]:
        return asdict(self)


def run_seeds(config: RunConfig) -> Dict[str, int]:
    """Every random stream of a run derives from the run seed; listed here for the audit trail."""
    return {
        "run": config.seed,
        "synthgen": config.seed,
        "cgan_demand": derived_seed(config.seed, 0),
        "cgan_pv": derived_seed(config.seed, 1),
        "monte_carlo": config.seed,
    }


def build_manifest(ctx: RunContext) -> RunManifest:
    outputs = {}
    for name in STAGE_ORDER:
        for output in STAGES[name].outputs:
            path = ctx.path(output)
            if path.is_file():
                outputs[output] = file_digest(path)
    return RunManifest(
        config_hash=ctx.config.config_hash,
        config=ctx.config.as_dict(),
        seeds=run_seeds(ctx.config),
        versions={"packages": package_versions(), "checkpoint": CHECKPOINT_VERSION, "stage_cache": CACHE_FILENAME},
        timings=dict(ctx.timings),
        stages=dict(ctx.statuses),
        outputs=outputs,
        tariff=ctx.config.tariff.as_dict(),
        run_id=ctx.run_id,
        details=dict(ctx.details),
    )


def write_manifest(manifest: RunManifest, directory: Path) -> Path:
    target = Path(directory) / MANIFEST_FILENAME
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(json.dumps(manifest.as_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info("Manifiesto escrito en %s (%s artefactos)", target, len(manifest.outputs))
    return target


def read_manifest(directory: Path) -> Dict[str, Any]:
    return json.loads((Path(directory) / MANIFEST_FILENAME).read_text(encoding="utf-8"))


__all__ = ["MANIFEST_FILENAME", "RunManifest", "build_manifest", "package_versions", "read_manifest", "write_manifest"]
