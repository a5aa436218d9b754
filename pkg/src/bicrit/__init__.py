"""Critical weighted random bipartite graphs and their continuum limits."""

from .weights import (CriticalPair, WeightSpec, discrete_table, exponential,
                      make_critical_pair, moment, point_mass, power_tail,
                      sample_weights, uniform, validate_critical_pair)
from .graph_core import (BipartiteGraph, edge_probability, intersection_graph,
                         components_and_distances, sample_direct)
from .lifo import (ClockSet, ExplorationRecord, assemble_graph, black_forest,
                   explore, lifo_genealogy, sample_clocks,
                   sample_surplus_direct)

__version__ = "0.1.0"
