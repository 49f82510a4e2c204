"""Local asymptotic normality experiments for discretely observed Levy-driven SDEs."""
from .errors import (ConditionAViolation, ConditionHViolation, ConfigError, InvalidScheme, InvalidSpec,
                     LanlabError, LikelihoodUndefined, NoUniqueInvariant, NonpositiveFisher,
                     NumericalBlowup, ScoreUndefined)
from .ergodics import (ErgodicSummary, fisher_growth, invariant_moments, khasminskii_average,
                       longrun_variance, mixing_fit, sigma2_plugin)
from .finite_chain import (FiniteChainModel, exact_fisher_info, exact_score, exact_sigma2, make_chain,
                           stationary_distribution, symmetric_two_state)
from .lan_analysis import (LanDecomposition, LanReport, RateSequence, ZetaDiagnostics,
                           anderson_darling_normal, condition_stats, delta_n, fisher_and_rate,
                           lan_experiment, loglik_ratio, zeta_diagnostics)
from .levy_noise import (IncrementSamplerConfig, LevyMeasureSpec, LevyNoise, check_condition_H,
                         sample_increment)
from .sde_model import (DiscreteSample, DriftFamily, ObservationScheme, Path, check_condition_A,
                        make_drift, simulate_observations, simulate_path)
from .transition_density import (KdeScoreConfig, KdeSdeModel, TransitionModel, estimated_score,
                                 l2_derivative_residual, score_martingale_residual)

__version__ = "0.1.0"
