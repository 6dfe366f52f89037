"""simdm - signal recovery for single index models with diffusion-model priors."""

__version__ = "0.1.0"
