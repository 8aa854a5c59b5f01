"""Estimation of single and interaction effects of multiple binary treatments.

The package couples a representation network, a treatment-pattern embedding,
and a shared outcome head, trained with frequency-weighted regression and a
pairwise optimal-transport balancing penalty, plus the baselines and the
simulation benchmarks used to evaluate them.
"""

from .data import Dataset, ingest_csv, read_dataset_csv, split_indices, write_dataset_csv
from .estimands import (EffectReport, ErrorReport, aie, ase, effect_errors,
                        estimate_effects, estimate_mu_hat,
                        inclusion_exclusion_coeffs, true_effects)
from .harness import (ExperimentPlan, MetricsTable, embedding_similarity,
                      run_ablation, run_benchmark, run_single, sweep)
from .kernels import EXTENSION_ACTIVE
from .model import (METHODS, LossBreakdown, ModelBundle, TrainConfig,
                    init_model, pattern_weights, predict_mu, total_loss,
                    train, weighted_outcome_loss)
from .neural import AdamState, MLPParams, adam_step, init_mlp, mlp_forward
from .ot_balance import RepGroup, balancing_penalty, sinkhorn_wasserstein
from .simgen import (OracleModel, ScenarioSpec, SimDataset, assign_treatments,
                     draw_spec, generate, outcome_function_f)

__version__ = "0.1.0"
