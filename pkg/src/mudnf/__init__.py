"""Normal forms for nonautonomous ODEs with mu-dichotomies.

Submodules, bottom-up: ``growth`` (growth rates), ``linear`` (block systems
and evolution operators), ``dichotomy`` (spectrum estimation),
``admissibility`` (dominating functions), ``resonance``, ``nonlinearity``,
``homological`` (the conjugation map), ``transform`` (eliminations and the
normal form), ``nonuniform`` (diagnostics) and ``cli``.
"""

__version__ = "0.1.0"

from .errors import (AdmissibilityDivergence, BudgetError, DomainError, HypothesisViolation,
                     InconclusiveError, InvariantError, MudnfError, NumericalError,
                     PreconditionError, VerificationError, WindowError)
from .growth import GrowthRate, exponential, induce, polynomial
from .linear import (BlockSystem, ConstantBlock, EvolutionOperator, PiecewiseConstantBlock,
                     SmoothBlock, fit_bounded_growth)
from .dichotomy import Spectrum, block_spectra, compute_spectrum, test_dichotomy
from .admissibility import (AdmissibleCandidate, check_uniform_admissibility, zeta_minus,
                            zeta_plus)
from .resonance import MultiIndex, check_H3, check_nonresonance
from .nonlinearity import PolynomialNonlinearity, taylor_tensor_apply, verify_H2
from .homological import ConjugationMap
from .transform import (TransformedSystem, conjugacy_residual, eliminate_term,
                        estimate_origin_coeff, normal_form)
from .nonuniform import eta_minus, eta_plus, nonuniform_h_bound, shrinkage_report

__all__ = [name for name in dir() if not name.startswith("_")]
