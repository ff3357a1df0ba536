"""Per-pixel statistics derived from probability maps
"""
import numpy as np

from vlmseg.classes.grid import ConfidenceMap, LabelMap, PixelMask, ProbMap
from vlmseg.errors import ConfigurationError, GridShapeError


def argmax_labels(probs: ProbMap) -> LabelMap:
    """Pseudo-label = most probable class; ties go to the lowest class index"""
    # np.argmax returns the first maximal index
    return LabelMap(data=np.argmax(probs.data, axis=2), num_classes=probs.num_classes)


def confidence(probs: ProbMap) -> ConfidenceMap:
    """Maximum class probability per pixel, in [1/K, 1]"""
    return ConfidenceMap(data=np.max(probs.data, axis=2))


def check_tau(tau: float, num_classes: int, key: str = "tau") -> float:
    if not (1.0 / num_classes < tau <= 1.0):
        raise ConfigurationError(
            f"{key} must lie in (1/K, 1] = ({1.0 / num_classes:.4f}, 1], got {tau}"
        )
    return float(tau)


def low_confidence_mask(conf: ConfidenceMap, tau: float, num_classes: int) -> PixelMask:
    """Low-confidence region: conf < tau, strictly"""
    check_tau(tau, num_classes)
    return PixelMask(data=conf.data < tau)


def check_same_hw(*grids) -> None:
    shapes = {tuple(grid.data.shape[:2]) for grid in grids if grid is not None}
    if len(shapes) > 1:
        raise GridShapeError(f"grid shapes disagree: {sorted(shapes)}")
