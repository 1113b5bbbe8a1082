# Managers Package

from .cv_manager import CVSettings, DiagnosticCurve, fit_boosted, sequential_tune
from .two_stage_manager import SGBTModel, TwoStageModel, fit_sgbt, fit_tsgbt, load_model, predict_hte
from .permutation_manager import PermutationResult, permutation_test
