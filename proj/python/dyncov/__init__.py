"""BEKK and particle-filtered BMDC covariance forecasting."""

from ._core import (
    DyncovError,
    __version__,
    fit_bekk,
    friedman_test,
    mvn_logpdf,
    mvt_logpdf,
    nemenyi_critical_distance,
    rolling_evaluate,
    run_cli,
    run_filter,
    simulate_bekk,
)

__all__ = [
    "DyncovError",
    "__version__",
    "fit_bekk",
    "friedman_test",
    "mvn_logpdf",
    "mvt_logpdf",
    "nemenyi_critical_distance",
    "rolling_evaluate",
    "run_cli",
    "run_filter",
    "simulate_bekk",
]
