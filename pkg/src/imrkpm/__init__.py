"""Image-based interface-modified RKPM for damage in particle-reinforced composites.

Pipeline: grayscale micrograph -> Otsu labels -> RBF SVM score field ->
RK nodes with interface nodes on the S = 0 set -> IM-RK shape functions ->
quasi-static Galerkin solution with strain-dependent phase-field damage in
the bulk and a smeared exponential cohesive law on interfaces.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    ClassificationError,
    ConfigError,
    ConvergenceError,
    CoverageError,
    DegenerateGradientError,
    DegenerateInputError,
    ImageFormatError,
    ImrkpmError,
    MissingFileError,
    OutputError,
    ParameterError,
    SolverError,
    TrainingError,
)
