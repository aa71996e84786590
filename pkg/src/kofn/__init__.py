"""Max-throughput routing and min-cost strategies for parallel k-of-n testing."""

from .instances import CostInstance, Instance
from .rational import Rat, format_rat, rat

__all__ = ["Instance", "CostInstance", "Rat", "rat", "format_rat"]

__version__ = "0.1.0"
