"""PDE-smoothed stochastic optimization with a low-dimensional verification lab."""

from . import analysis, config, experiments, grid, objectives, optimizers, pde_lab, plotting, rng

__all__ = [
    "analysis", "config", "experiments", "grid", "objectives",
    "optimizers", "pde_lab", "plotting", "rng",
]

__version__ = "0.1.0"
