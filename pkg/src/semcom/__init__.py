"""Downlink MU-MIMO OFDM semantic communication simulator."""

__version__ = "0.1.0"

from .config import LinkConfig, SsccConfig, TrainConfig  # noqa: E402
from .models import SemanticSystem  # noqa: E402

__all__ = ["LinkConfig", "SemanticSystem", "SsccConfig", "TrainConfig", "__version__"]
