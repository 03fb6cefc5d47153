"""Exact simulation and potential theory for the two-dimensional discrete Gaussian free field.

Submodules: :mod:`geometry` (lattice domains), :mod:`harmonic` (Dirichlet
solves, capacitors, Green matrices), :mod:`walks` (random walks, hitting
probabilities, the potential kernel), :mod:`sampler` (exact field samplers
and the capacitor projection), :mod:`projection` (averaging measures and
variance identities), :mod:`estimators` (tail estimators), :mod:`checks`
(the property battery) and :mod:`experiments` / :mod:`cli` (the runner).
"""

from .config import ExperimentConfig, load_config
from .errors import (
    ConfigInvalid,
    DegenerateInterior,
    DGFFLabError,
    DisconnectedDiscretization,
    DomainTooLarge,
    EffectiveSampleSizeTooLow,
    EmptyDiscretization,
    HypothesisViolated,
    NoConvergence,
    ProbabilityUnderflow,
    StepBudgetExceeded,
)
from .estimators import EstimateReport, HardWallEstimator
from .geometry import Disk, DomainPair, LatticeDomain, Rectangle, SmoothCurve, discretize
from .harmonic import Capacitor, HarmonicExtension, capacitor, green_matrix, solve_dirichlet
from .sampler import CapacitorProjection, DGFFSampler

__version__ = "0.1.0"
