"""Responsible-AI toolkit: fair/robust training, selective data acquisition,
unified cleaning, adaptive batch selection, and problematic-slice discovery
over small tabular datasets."""

from raikit._core import (  # noqa: F401
    Classifier,
    Dataset,
    ThresholdClassifier,
    accuracy,
    apply_slice,
    baseline_uniform,
    baseline_waterfilling,
    demographic_parity,
    effect_size,
    equalized_error_rate_gap,
    equalized_odds_disparity,
    evaluate_tradeoff,
    fairness_report,
    find_problematic,
    fit_learning_curve,
    fit_threshold_fair,
    fit_threshold_max_accuracy,
    gen_synthetic,
    imbalance_ratio,
    logistic_loss,
    make_fig2_fixture,
    make_poisoned_fig2_fixture,
    make_table1_fixture,
    mlclean_pipeline,
    optimize_allocation,
    per_example_losses,
    poison_label_flip,
    reweigh_for_dp,
    significance_test,
    train_fairbatch,
    train_frtrain,
    train_sgd,
    weighted_positive_rate,
)

__all__ = [name for name in dir() if not name.startswith("_")]
