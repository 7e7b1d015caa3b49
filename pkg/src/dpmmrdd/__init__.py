"""Dirichlet-process clustering for unit selection in fuzzy regression
discontinuity designs, with classical bandwidth baselines."""

from .bandwidth import (BandwidthResult, cv_criterion, cv_select, fixed_window, ik_bandwidth,
                        lr_window, subset_by_bandwidth)
from .cohort import (Cohort, CohortError, CovariateSchema, CovariateStandardizer, Unit,
                     load_cohort_csv, standardize_covariates, validate_cohort, write_cohort_csv)
from .dpmm import DirichletProcessMixture, DpmmPriors, McmcConfig, MixedData, run_dpmm
from .estimator import (BayesianFuzzyRDD, DenominatorPriors, LateEstimate, OutcomePriors,
                        PosteriorDraws, compute_late, estimate_late, fit_ate, fit_denominator,
                        summarize)
from .partition import Partition, PosteriorSimilarityMatrix, best_partition, compute_psm, pam
from .pipeline import ComparisonTable, RunConfig, emit_plot_data, load_config, run_pipeline
from .selection import (ClusterSummary, SelectionResult, cluster_balance, homogeneity_index,
                        select_units, summarize_clusters)
from .simulate import SimConfig, StudyConfig, simulate_cohort, simulate_study

__version__ = "0.1.0"
