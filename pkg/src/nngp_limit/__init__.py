"""Infinite-width Gaussian-process kernels of random fully connected networks,
and Monte Carlo studies of how finite-width networks approach that limit."""

from .distributions import BiasLaw, RngStream, WeightDistribution
from .experiments import (
    ConvergenceReport,
    ExperimentGrid,
    WidthLadder,
    convergence_study,
    kernel_report,
    tightness_study,
    universality_study,
)
from .kernel import (
    BivariateSlice,
    KernelMatrix,
    QuadratureRule,
    bivariate_expectation,
    first_layer_kernel_gaussian,
    kernel_forward,
    kernel_step,
    relu_pair_oracle,
    second_layer_kernel_general,
)
from .network import InputSet, NetworkConfig, forward, sample_ensemble, sample_network
from .nonlinearity import Nonlinearity
from .nonlinearity import get as get_nonlinearity
from .reporting import read_report, write_kernels, write_report

__version__ = "0.1.0"
