"""Key rates for multi-user discrete-modulated CV-QKD star networks."""

from .protocol import ChannelSpec, JointDistribution, ProtocolSpec
from .lossonly import TrustScenario, dw_rate, optimal_rate

__version__ = "0.1.0"
