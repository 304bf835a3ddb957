"""Exception hierarchy shared across the toolkit.

Exit-code mapping for the CLI lives in ``cli.py``: configuration/usage
problems exit 1, data errors exit 2, numerical failures exit 3.
"""


class GridScenError(Exception):
    """Base class for all toolkit errors."""


# --- data errors -----------------------------------------------------------

class InvalidModel(GridScenError):
    """Network model violates a structural invariant."""


class InvalidSpec(GridScenError):
    """Uncertainty specification is malformed or inconsistent."""


class DimensionError(GridScenError):
    """Requested dimension is out of the valid range."""


class NonSymmetric(GridScenError):
    """Matrix expected to be symmetric is not, beyond tolerance."""


class DegenerateInput(GridScenError):
    """Input is constant/degenerate where variation is required."""


class MethodMismatch(GridScenError):
    """Operation applied to an embedding of the wrong method."""


class GridMismatch(GridScenError):
    """Raster fields have differing resolution or bounding box."""


class NonFinite(GridScenError):
    """NaN or infinity where a finite value is required."""


class ConstantColumn(GridScenError):
    """A sample-matrix column has zero variance."""


class TooFewSamples(GridScenError):
    """Not enough samples for the requested fit."""


class TooFewScenarios(GridScenError):
    """Not enough scenarios for the requested clustering."""


class UnsupportedDesign(GridScenError):
    """No orthogonal-array construction applies to (levels, factors)."""


class UnfittedSet(GridScenError):
    """Typical-scenario set used before fitting."""


class LengthMismatch(GridScenError):
    """Paired vectors have different lengths."""


class SkippedScenario(GridScenError):
    """Scenario cannot be simulated (power flow did not converge)."""


# --- numerical failures ----------------------------------------------------

class SingularNetwork(GridScenError):
    """Bus admittance matrix is numerically singular even after grounding."""


class NonSPD(GridScenError):
    """Covariance matrix is not symmetric positive definite."""


class RankDeficient(GridScenError):
    """Covariance block remains rank deficient after regularization."""


class DegenerateKernel(GridScenError):
    """Centered kernel Gram matrix is numerically zero."""


class CollapsedComponent(GridScenError):
    """Mixture component weight collapsed below the floor."""


class NumericalBlowup(GridScenError):
    """Integration left the trust region (runaway trajectory)."""


# --- configuration ---------------------------------------------------------

class ConfigError(GridScenError):
    """Pipeline configuration file or flag is invalid."""


DATA_ERRORS = (
    InvalidModel,
    InvalidSpec,
    DimensionError,
    NonSymmetric,
    DegenerateInput,
    MethodMismatch,
    GridMismatch,
    NonFinite,
    ConstantColumn,
    TooFewSamples,
    TooFewScenarios,
    UnsupportedDesign,
    UnfittedSet,
    LengthMismatch,
    SkippedScenario,
)

NUMERICAL_ERRORS = (
    SingularNetwork,
    NonSPD,
    RankDeficient,
    DegenerateKernel,
    CollapsedComponent,
    NumericalBlowup,
)
