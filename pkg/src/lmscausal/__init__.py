"""Student-centric LMS login analytics: features, chronotypes, prediction,
explanations, sparse mCCA composites and causal discovery."""

__version__ = "0.1.0"
