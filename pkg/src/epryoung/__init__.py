"""Nonlocal N-slit interference of EPR pairs and the modular entanglement criterion.

Subpackages by layer: ``specfun`` and ``kernels`` (numerics), ``modular``
(modular variables and the criterion), ``states`` (sources and post-grating
states), ``observables`` (closed-form and numeric variances), ``sampler``
and ``analysis`` (Monte Carlo events and their evaluation), ``io`` and
``cli`` (files and command line).
"""

__version__ = "0.1.0"

from .errors import EPRYoungError  # noqa: E402
from .modular import ModularFrame, criterion_constant, evaluate_criterion  # noqa: E402
from .states import EprSource, GratingSpec, build_mme_state, build_suboptimal_state  # noqa: E402

__all__ = [
    "__version__",
    "EPRYoungError",
    "ModularFrame",
    "criterion_constant",
    "evaluate_criterion",
    "EprSource",
    "GratingSpec",
    "build_mme_state",
    "build_suboptimal_state",
]
