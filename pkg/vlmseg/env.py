"""
Global configuration
"""

import logging

PACKAGE_LOGGER_NAME = "vlmseg"

logger = logging.getLogger(PACKAGE_LOGGER_NAME)

PROB_SUM_TOLERANCE = 1e-5
"""Per-pixel probability mass must lie in [1 - tol, 1 + tol]"""
CONF_UPPER_TOLERANCE = 1e-9
"""Fused confidences may exceed 1 by float rounding only"""

MAX_LABEL_CLASSES = 255
"""Labels are stored as u8 on disk"""
NO_OPINION = -1
"""Class value of a VLM layer pixel not covered by any region"""

PROMPT_TEXT = "List and locate all visible classes in the image."

DEFAULT_TAUS = [0.5, 0.6, 0.7, 0.8, 0.9]
DEFAULT_LABELED_RATIOS = [0.01, 0.05, 0.1]

REFERENCE_SCALE_RESULTS = {
    "potsdam_vlmpp_delta_miou": 4.59,
    "loveda_vlmpp_delta_miou": 5.01,
    "best_tau_low": 0.7,
    "best_tau_high": 0.8,
    "adopted_tau": 0.7,
}
"""Full-scale (GPU, real data) reference numbers; recorded beside desk results, never asserted"""
