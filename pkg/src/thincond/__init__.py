"""Thinning, condensation and their inverse problems for counts and point processes."""

__version__ = "0.1.0"

from .dist_core import (  # noqa: E402
    PapangelouSeq,
    Reconstruction,
    SplitView,
    TriMatrix,
    TruncatedPmf,
    condense,
    reconstruct,
    splitting_of,
    thin,
    verify_cycle,
    verify_ibp,
)
from .errors import (  # noqa: E402
    CycleConditionError,
    DegenerateError,
    DimensionError,
    PreconditionError,
    SamplingError,
    StochasticityError,
    TailToleranceError,
    ThincondError,
    UnsupportedCombinationError,
)
from .model_zoo import DistSpec, ThinSpec, make_dist, make_thinning  # noqa: E402

__all__ = [
    "CycleConditionError", "DegenerateError", "DimensionError", "DistSpec", "PapangelouSeq",
    "PreconditionError", "Reconstruction", "SamplingError", "SplitView", "StochasticityError",
    "TailToleranceError", "ThinSpec", "ThincondError", "TriMatrix", "TruncatedPmf",
    "UnsupportedCombinationError", "condense", "make_dist", "make_thinning", "reconstruct",
    "splitting_of", "thin", "verify_cycle", "verify_ibp",
]
