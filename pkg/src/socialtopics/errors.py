"""Exception types shared across the package."""


class DataError(ValueError):
    """Malformed, inconsistent, or insufficient input data."""


class ModelError(ValueError):
    """Invalid model configuration, hyperparameters, or state."""
