"""Safe residual control for the cart-pole: envelope design, safety-embedded
rewards, knowledge-edited networks and a small policy-gradient trainer."""

from .errors import *  # noqa: F401,F403
from .lmi_design import DesignConfig, DesignSolution, PlantModel, solve_design, verify_lmi
from .safety_geometry import (NormalizedSafetySet, SafetyEnvelope, SafetySet,
                              check_envelope_containment, normalize_safety_set)

__version__ = "0.1.0"
