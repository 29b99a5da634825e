"""Range-based volatility models: TACARR and the CARR, ACARR, FACARR and TARR baselines."""
from .diagnostics import TestReport, dm_test, ks_test, law_residuals, ljung_box
from .estimation import FitOptions, FitResult, fit, information_criteria, standard_errors
from .forecasting import ForecastRun, accuracy, insample_accuracy, one_step_forecast, rolling_forecast
from .likelihood import loglik_exponential, loglik_lognormal, model_loglik, standardized_residuals
from .models import (
    Branch,
    Family,
    Innovation,
    LambdaPath,
    ModelSpec,
    ParamVector,
    arma_residual_check,
    conditional_mean,
    lambda_acarr,
    lambda_carr,
    lambda_facarr,
    lambda_tacarr,
    lambda_tarr,
)
from .ranges import PriceBar, RangeObs, RangeSeries, Regime, classify_regime, extract_ranges, regime_path
from .simulation import RecoveryReport, SimConfig, recovery_study, simulate_path, synthetic_bars

__version__ = "0.1.0"
