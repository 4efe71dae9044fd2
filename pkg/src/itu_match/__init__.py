"""Solvers, estimators and diagnostics for matching markets with
imperfectly transferable utility.

Bargaining technologies are represented by distance-to-frontier
functions (:mod:`itu_match.bargaining`), which induce logit matching
functions (:mod:`itu_match.matchfn`) and a unique aggregate equilibrium
(:mod:`itu_match.equilibrium`).  Further modules cover full-assignment
markets, maximum-likelihood estimation, comparative statics,
search-and-matching steady states and a one-to-many extension.
"""

import os as _os

# ITU_MATCH_THREADS caps internal parallelism.  Linear algebra threading
# must be pinned before NumPy loads its BLAS, so this runs first.
_cap = _os.environ.get("ITU_MATCH_THREADS", "")
if _cap.isdigit() and int(_cap) > 0:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        _os.environ.setdefault(_var, _cap)
del _os, _cap

from ._backend import BACKEND_NAME, IS_COMPILED
from .bargaining import (
    ETU,
    LTU,
    NTU,
    TU,
    DistanceSpec,
    Intersection,
    PublicGoods,
    PublicGoodsOption,
    TaxSchedule,
    Union,
    WedgeBounds,
    evaluate,
    partials,
    spec_from_dict,
    spec_to_dict,
    wedge_bounds,
    wedge_utilities,
)
from .compstats import CompstatsResult, delta_matching, hessians_logit, symmetry_diagnostic
from .equilibrium import (
    EquilibriumOutcome,
    Market,
    Matching,
    VerificationReport,
    excess_demand,
    market_from_dict,
    market_to_dict,
    solve_ipfp,
    solve_jacobi,
    verify,
)
from .errors import (
    ConvergenceError,
    DomainError,
    InitializationError,
    ItuMatchError,
    NumericalError,
    OptimizationError,
    ValidationError,
)
from .estimation import (
    FitResult,
    ObservedSample,
    ParametricModel,
    fisher_information,
    fit_mle,
    log_likelihood,
    predicted_frequencies,
    sample_synthetic,
    score,
)
from .full_assignment import FixedEffects, solve_full
from .matchfn import MatchFnSpec, match_mass, match_mass_grad
from .one_to_many import (
    BundleTable,
    clearing_residual,
    distance_otm,
    enumerate_bundles,
    solve_experimental,
)
from .search import SearchOutcome, SearchParams, match_surplus, solve_steady_state

__version__ = "0.1.0"

__all__ = [
    "BACKEND_NAME",
    "IS_COMPILED",
    "__version__",
    # bargaining
    "DistanceSpec",
    "TU",
    "NTU",
    "LTU",
    "ETU",
    "TaxSchedule",
    "PublicGoods",
    "PublicGoodsOption",
    "Union",
    "Intersection",
    "WedgeBounds",
    "evaluate",
    "partials",
    "wedge_utilities",
    "wedge_bounds",
    "spec_to_dict",
    "spec_from_dict",
    # matching functions
    "MatchFnSpec",
    "match_mass",
    "match_mass_grad",
    # equilibrium
    "Market",
    "Matching",
    "EquilibriumOutcome",
    "VerificationReport",
    "solve_ipfp",
    "solve_jacobi",
    "excess_demand",
    "verify",
    "market_to_dict",
    "market_from_dict",
    # full assignment
    "FixedEffects",
    "solve_full",
    # estimation
    "ParametricModel",
    "ObservedSample",
    "FitResult",
    "log_likelihood",
    "score",
    "fit_mle",
    "fisher_information",
    "sample_synthetic",
    "predicted_frequencies",
    # comparative statics
    "CompstatsResult",
    "hessians_logit",
    "delta_matching",
    "symmetry_diagnostic",
    # search
    "SearchParams",
    "SearchOutcome",
    "solve_steady_state",
    "match_surplus",
    # one-to-many
    "BundleTable",
    "enumerate_bundles",
    "distance_otm",
    "clearing_residual",
    "solve_experimental",
    # errors
    "ItuMatchError",
    "ValidationError",
    "DomainError",
    "InitializationError",
    "ConvergenceError",
    "OptimizationError",
    "NumericalError",
]
