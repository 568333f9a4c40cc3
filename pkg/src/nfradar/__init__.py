"""Near-field FMCW radar lab: synthesis, bounds, ambiguity and estimation."""

__version__ = "0.1.0"

from .scenario import (AssumptionReport, ConfigurationError, DerivedParams, RadarConfig,
                       Scene, TargetState, check_assumptions, derive_geometry,
                       derive_params, load_scene)
from .synth import DataCube, SteeringSet, synthesize
from .bounds import FimReport, crb_vtheta_closed, fim_numeric
from .ambiguity import AfSurface, af_cut_vr_vtheta, af_cut_vtheta_ula, af_exact
from .estimate import EstimationResult, MultiTargetResult, estimate_multi, estimate_single
from .harness import SweepResult, SweepSpec, radar_profile, run_multitarget_demo, run_sweep
