"""motionweave: local-action-guided hierarchical latent diffusion for
text-to-motion generation."""

__version__ = "0.1.0"
