"""Spectra, domain derivatives and rearrangement inequalities for nonlocal operators.

The operator ``(A u)(x) = a(x) u(x) - int J(x - y) u(y) dy`` is discretised
by a Nystrom scheme on quadrature domains (flat domains and embedded
manifolds).  Simple isolated eigenvalues are differentiated along domain
deformations both analytically and by a finite-difference oracle that
deforms the domain itself.
"""

from .errors import (BandCollisionError, BranchTrackingError, ConvergenceError,
                     EigenvalueCrossingError, NonlocalError, NonSimpleEigenvalueError,
                     NumericalError, SolvabilityError, ValidationError)
from .geometry import (QuadratureDomain, VectorField, ball_with_measure, build_domain, dilation,
                       make_field, normal_bump, point_cloud, polynomial, push_domain, rotation,
                       split_field, translation, zero_field)
from .kernels import AmbientPolynomial, Coefficient, Kernel, build_coefficient, make_kernel
from .operator import (EigenPair, NonlocalOperator, SpectrumReport, assemble, eigenpair,
                       existence_diagnostic, principal_eigenpair, spectrum)
from .rearrange import (NodalFunction, distribution_function, faber_krahn_compare,
                        hardy_littlewood_check, layer_cake_check, riesz_check,
                        symmetric_decreasing, symmetric_increasing)
from .scenarios import build_setup, get_scenario, list_scenarios
from .shape import (HadamardReport, PerturbationFlow, eigenfunction_derivative, fd_derivative,
                    hadamard_derivative, pullback_check, scenario_hadamard)

__version__ = "0.1.0"
