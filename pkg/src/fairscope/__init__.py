"""Transport-based model bias, its favourability split, and per-predictor bias explanations."""

__version__ = "0.1.0"

from .errors import CapExceededError, ConfigError, DataError, FairscopeError, SupportTooWideError  # noqa: E402
from .metrics import BiasReport, model_bias  # noqa: E402
from .models import ModelSpec, generate  # noqa: E402

__all__ = ["BiasReport", "CapExceededError", "ConfigError", "DataError", "FairscopeError", "ModelSpec",
           "SupportTooWideError", "generate", "model_bias", "__version__"]
