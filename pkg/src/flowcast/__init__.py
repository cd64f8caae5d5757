"""Flow-matching probabilistic forecasting and latent-space ensemble perturbation."""

__version__ = "0.1.0"
