"""Dense networks with nonlinearity-enhanced adaptive activations, trained from scratch."""

from neaf.activations import ActivationKind, Basis
from neaf.network import Network, NetworkSpec, NumericFailure

__version__ = "0.1.0"

__all__ = ["ActivationKind", "Basis", "Network", "NetworkSpec", "NumericFailure"]
