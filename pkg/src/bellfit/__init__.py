"""Cosine-law fits, rms-deviation inequality tests and two-angle hidden-variable
models for polarization-correlation photon experiments."""

__version__ = "0.1.0"

from .data import (CoincidenceDataset, EfficiencyContext, Family,
                   builtin_reference_dataset, canonicalize, dump_dataset,
                   family_hierarchy, fold_angle, load_dataset, uniform_grid_deg)
from .errors import (BellfitError, DatasetError, DomainError, FitError,
                     NumericError, PreconditionError)
from .fit import (CosineFit, CosineLawRegressor, VisibilityPair, eta_overall,
                  fit_cosine, mean_rate, predict_rate, visibility_discrete,
                  visibility_pair)
from .inequality import (EpsilonSolution, InequalityReport, Verdict,
                         d_eta_approx, d_eta_lower_bound, delta_exp,
                         deviation_profile, epsilon_approx, epsilon_exact,
                         predicted_model_rate, run_inequality_test, v_effective)
from .lhvmodel import (ConstantDetection, CosSquaredDetection, GridDensity,
                       Lhv4Density, LhvModel, UniformDensity, WindowDetection,
                       coincidence_probability, model_dataset, model_from_dict,
                       quantum_dataset, single_probability, validate_model)
from .montecarlo import (SimulationConfig, sample_hidden_pair, simulate,
                         simulate_quantum, simulate_run)
