"""Exception hierarchy shared by every disbayes module.

Each error carries the process exit code the command line maps it to.
"""

from typing import Dict, List, Optional


class DisbayesError(Exception):
    """Base class for all disbayes failures"""

    exit_code = 1
    error_type = "disbayes_error"

    def __init__(self, message: str, details: Optional[Dict] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}


# Configuration

class ConfigInvalid(DisbayesError, ValueError):
    """Experiment configuration failed validation"""

    exit_code = 2
    error_type = "config_invalid"

    def __init__(self, message: str, field_errors: Optional[List[str]] = None):
        super().__init__(message, {"fields": field_errors or []})
        self.field_errors = field_errors or []


class ResultsIOError(DisbayesError, OSError):
    """Reading or writing experiment artifacts failed"""

    exit_code = 1
    error_type = "results_io"


# Numerical failures

class NumericalFailure(DisbayesError, ArithmeticError):
    exit_code = 3
    error_type = "numerical_failure"


class NormalizerDivergence(NumericalFailure):
    """A belief normalizer was not finite"""

    error_type = "normalizer_divergence"


class NoConvergence(NumericalFailure):
    """Newton iteration stopped without meeting its tolerance"""

    error_type = "no_convergence"


class IndefiniteHessian(NumericalFailure):
    error_type = "indefinite_hessian"


class SingularFisher(NumericalFailure):
    error_type = "singular_fisher"


class NonIntegrable(NumericalFailure):
    """Quadrature failed to converge"""

    error_type = "non_integrable"


# Graph

class GraphError(DisbayesError, ValueError):
    error_type = "graph_error"


class DisconnectedGraph(GraphError):
    error_type = "disconnected_graph"


class EmptyGraph(GraphError):
    error_type = "empty_graph"


class IndexOrder(GraphError):
    error_type = "index_order"


# Models

class ModelError(DisbayesError, ValueError):
    error_type = "model_error"


class NonpositiveScale(ModelError):
    error_type = "nonpositive_scale"


class OutOfSupport(ModelError):
    error_type = "out_of_support"


class SupportMismatch(ModelError):
    error_type = "support_mismatch"


class UnsupportedModel(ModelError):
    error_type = "unsupported_model"


# Beliefs

class BeliefError(DisbayesError, ValueError):
    error_type = "belief_error"


class RepresentationMismatch(BeliefError):
    error_type = "representation_mismatch"


class ObservationOutOfSupport(BeliefError):
    error_type = "observation_out_of_support"


class OutOfBox(BeliefError):
    error_type = "out_of_box"
