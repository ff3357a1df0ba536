from enum import Enum, IntEnum


class GridDType(IntEnum):
    """dtype code stored in byte 4 of a GRD1 file"""

    U8 = 0
    """8-bit unsigned labels (and boolean masks)"""
    F32 = 1
    """32-bit little-endian floats"""

    def __str__(self):
        return self.name


class GridKind(IntEnum):
    """Which wrapper `read_grid` should build around the decoded array"""

    LABEL = 1
    PROB = 2
    CONFIDENCE = 3
    MASK = 4
    ARRAY = 5
    """Raw numpy array, e.g. scene feature images or checkpoint weights"""

    def __str__(self):
        return self.name


class SplitRole(str, Enum):
    """Role of a scene id in the split manifest"""

    LABELED = "labeled"
    UNLABELED = "unlabeled"
    VAL = "val"
    TEST = "test"

    def __str__(self):
        return self.value


class OracleSource(str, Enum):
    MOCK = "mock"
    """Corruptible oracle reading the synthetic ground truth"""
    REMOTE = "remote"
    """HTTP endpoint speaking the classify-regions protocol"""

    def __str__(self):
        return self.value


class NormalizationMode(str, Enum):
    """How raw per-class VLM confidences are normalized"""

    SUM = "sum"
    """c_k / (sum_j c_j + eps), the formula as written"""
    RAW = "raw"
    """Pass raw confidences through untouched"""

    def __str__(self):
        return self.value


class PurifyRule(IntEnum):
    """The purification rule that decided a pixel; exactly one per pixel"""

    HIGH_CONF = 1
    """Teacher confidence >= tau: teacher label adopted verbatim"""
    NO_OPINION = 2
    """Low confidence and no VLM region covers the pixel"""
    AGREEMENT = 3
    """Low confidence, VLM agrees: confidences fused"""
    CONFLICT = 4
    """Low confidence, VLM disagrees: label rectified to the VLM class"""

    def __str__(self):
        return self.name


class BaselineFilter(str, Enum):
    """Pseudo-label policy when VLM purification is disabled"""

    NONE = "none"
    """Every teacher pseudo-label trains the student"""
    THRESHOLD = "threshold"
    """Only pixels with teacher confidence >= final filter tau train the student"""

    def __str__(self):
        return self.value


class EvalModel(str, Enum):
    """Which parameter set is scored on validation/test data"""

    STUDENT = "student"
    TEACHER = "teacher"

    def __str__(self):
        return self.value
