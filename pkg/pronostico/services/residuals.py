from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import joblib
import numpy as np


@dataclass(frozen=True)
class ResidualFrame:
    """Per (prosumer, day, slot) residuals y - ŷ of one channel."""

    actual: np.ndarray
    predicted: np.ndarray
    residual: np.ndarray
    channel: str = ""
    prosumers: Tuple[int, ...] = ()
    days: Tuple[date, ...] = ()

    def reconstruct(self) -> np.ndarray:
        return self.predicted + self.residual

    def day_rows(self) -> np.ndarray:
        """Residual day-profiles flattened to (prosumer * day, slot)."""
        return self.residual.reshape(-1, self.residual.shape[-1])


def compute_residuals(
    actual,
    predicted,
    channel: str = "",
    prosumers: Optional[Sequence[int]] = None,
    days: Optional[Sequence[date]] = None,
) -> ResidualFrame:
    actual = np.asarray(actual, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    if actual.shape != predicted.shape:
        raise ValueError(f"Formas distintas: real {actual.shape} vs pronóstico {predicted.shape}.")
    return ResidualFrame(
        actual=actual,
        predicted=predicted,
        residual=actual - predicted,
        channel=channel,
        prosumers=tuple(prosumers or ()),
        days=tuple(days or ()),
    )


def save_residuals(frame: ResidualFrame, path: Union[str, Path]) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    joblib.dump(frame, target)
    return target


def load_residuals(path: Union[str, Path]) -> ResidualFrame:
    return joblib.load(Path(path))


__all__ = ["ResidualFrame", "compute_residuals", "load_residuals", "save_residuals"]
