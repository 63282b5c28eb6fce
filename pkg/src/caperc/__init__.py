"""Edge color-avoiding percolation on randomly colored Erdős–Rényi multigraphs."""

from .ca_components import CAReport, Partition, ca_partition, ca_partition_oracle, meet
from .colored_graph import ColoredMultigraph, ColorParams, figure1_gadget, generate
from .errors import DomainError, GraphFormatError, RegimeError, ResourceError
from .structure_census import census, enumerate_cycles, max_separation
from .theory import Regime, classify_regime, constants

__all__ = [
    "CAReport",
    "ColorParams",
    "ColoredMultigraph",
    "DomainError",
    "GraphFormatError",
    "Partition",
    "RegimeError",
    "Regime",
    "ResourceError",
    "ca_partition",
    "ca_partition_oracle",
    "census",
    "classify_regime",
    "constants",
    "enumerate_cycles",
    "figure1_gadget",
    "generate",
    "max_separation",
    "meet",
]
