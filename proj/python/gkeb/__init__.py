"""Empirical Bayes hyperparameter estimation with generalized Golub-Kahan."""

from ._gkeb import Model, relative_error, run_command

__all__ = ["Model", "relative_error", "run_command"]
