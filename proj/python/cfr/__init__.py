from ._core import (
    bound,
    bound_terms,
    disc_oracle_spectral,
    eval_metrics,
    fit_predict,
    gen_news,
    gen_surface,
    linear_disc,
    nearest_cross_group,
    run,
    simplex_project,
    simulate,
)

__all__ = [
    "bound",
    "bound_terms",
    "disc_oracle_spectral",
    "eval_metrics",
    "fit_predict",
    "gen_news",
    "gen_surface",
    "linear_disc",
    "nearest_cross_group",
    "run",
    "simplex_project",
    "simulate",
]
