from pathlib import Path
from typing import Tuple, Union

import joblib

from .networks import Mlp, MlpSpec, init_networks

CHECKPOINT_VERSION = "cgan-1"


class CheckpointError(ValueError):
    """Raised when a generator/critic checkpoint cannot be read back."""


def save_checkpoint(
    path: Union[str, Path],
    generator: Mlp,
    critic: Mlp,
    mode: str,
    seed: int,
    iterations: int,
) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "version": CHECKPOINT_VERSION,
        "generator_spec": generator.spec.as_dict(),
        "critic_spec": critic.spec.as_dict(),
        "mode": mode,
        "seed": int(seed),
        "iterations": int(iterations),
        "generator": generator.weights(),
        "critic": critic.weights(),
    }
    joblib.dump(payload, target)
    return target


def load_checkpoint(path: Union[str, Path]) -> Tuple[Mlp, Mlp, dict]:
    source = Path(path)
    if not source.exists():
        raise CheckpointError(f"No existe el checkpoint {source}.")
    payload = joblib.load(source)
    if not isinstance(payload, dict) or payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"Versión de checkpoint no soportada en {source}.")
    try:
        generator = init_networks(MlpSpec.from_dict(payload["generator_spec"]))
        critic = init_networks(MlpSpec.from_dict(payload["critic_spec"]))
        generator.load_weights(payload["generator"])
        critic.load_weights(payload["critic"])
    except (KeyError, RuntimeError, ValueError) as exc:
        raise CheckpointError(f"Checkpoint corrupto {source}: {exc}") from exc
    meta = {key: payload[key] for key in ("version", "mode", "seed", "iterations")}
    return generator, critic, meta


__all__ = ["CHECKPOINT_VERSION", "CheckpointError", "load_checkpoint", "save_checkpoint"]
