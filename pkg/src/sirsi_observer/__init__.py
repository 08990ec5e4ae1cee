"""Guaranteed state estimation for an SIR-SI host-vector epidemic model.

A pair of coupled interval observers brackets the susceptible-host,
infective-host and infective-vector proportions from continuous
incidence measurements, under time-varying transmission rates known
only through envelopes.  The package simulates the coupled system,
schedules the observer gains for maximal certified decay, and verifies
Lyapunov error bounds along every run.
"""

from .model import (
    EnvelopeRates,
    EpidemicParams,
    HostVectorState,
    PiecewiseConstantEnvelope,
    SeasonalEnvelope,
    TransmissionEnvelope,
    basic_reproduction_ratio,
    incidence_output,
    integral_form_residuals,
    reduced_dynamics,
)
from .observer import (
    DegenerateStateError,
    GainHyperParams,
    GainValues,
    InfeasibleGainError,
    ObserverPairState,
    XiTargets,
    check_hyp_kS,
    obs1_dynamics,
    obs2_dynamics,
    schedule_gains,
    xi_targets,
)
from .certify import (
    ErrorSystem,
    ErrorVector,
    build_error_systems,
    certified_bound,
    delta_rates,
    forcing_terms,
    lyapunov_values,
    rho_weights,
    verify_dual_inequality,
)
from .simulate import (
    CertifiedTrace,
    IntegrationConfig,
    IntegrationError,
    ViolationReport,
    advance_coupled,
    run,
    verify_trace,
)
from .scenario import (
    ConfigError,
    ScenarioConfig,
    load_config,
    paper_sec6_preset,
    run_scenario,
)

__version__ = "0.1.0"
