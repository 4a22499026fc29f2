"""Numerical laboratory for quadratic Siegel disks and their perturbations.

Subpackages by theme:

* :mod:`siegelab.cfrac` -- exact continued-fraction arithmetic and perturbed angles
* :mod:`siegelab.dynamics` -- iteration kernel, cycle location, explosion branches
* :mod:`siegelab.linearization` -- linearizing series, conformal radius, Siegel models
* :mod:`siegelab.measure` -- pixel-grid areas, densities, Hausdorff semi-distance
* :mod:`siegelab.perturbed` -- straightening charts and commuting-pair lifts
* :mod:`siegelab.fatou` -- parabolic and perturbed Fatou coordinates, renormalization step
* :mod:`siegelab.cli` -- renders, experiments, cache
"""

__version__ = "0.1.0"

from .errors import (
    SiegelabError,
    PrecisionError,
    DivisorUnderflow,
    NonConvergence,
    CollapsedToFixedPoint,
    BranchJump,
    OrbitLeftOmega,
    StepUnderflow,
    NonParabolic,
    InverseBranchLost,
    AlphaTooLarge,
    StripCollapsed,
    PathExitsDomain,
    ReturnNotFound,
)
