"""Contest-based transmit-power incentives with a diffusion-policy learner."""

__version__ = "0.1.0"
