"""Length-minimizing trees whose leaves all sit at equal depth from the root."""
from .errors import LedTreeError
from .tree import HangingType, LedTreeInstance, TreeTopology, build_topology, evaluate

__version__ = "0.1.0"

__all__ = [
    "LedTreeError",
    "HangingType",
    "LedTreeInstance",
    "TreeTopology",
    "build_topology",
    "evaluate",
    "__version__",
]
