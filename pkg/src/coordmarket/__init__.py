"""Coordinated supply-chain markets cleared as welfare-maximising linear programs."""
from __future__ import annotations

from .bids import (ActivatingBidReport, RevenueShares, ShareTerm, compute_activating_bids,
                   compute_partial_bid)
from .clearing import (ClearingSolution, InfeasibleMarket, UnboundedMarket, clear, clear_forced,
                       diversion_rate, verify_theorems)
from .graph import build_graph, components, enumerate_paths, find_technology_cycles
from .lp import LinearProgram, LpSolution, RevisedSimplex
from .model import (Consumer, GeoNode, Product, Scenario, Supplier, SupplyChainModel, Technology,
                    TransportProvider, apply_scenario, dump_model, load_model)

__all__ = [
    "ActivatingBidReport", "ClearingSolution", "Consumer", "GeoNode", "InfeasibleMarket",
    "LinearProgram", "LpSolution", "Product", "RevenueShares", "RevisedSimplex", "Scenario",
    "ShareTerm", "Supplier", "SupplyChainModel", "Technology", "TransportProvider",
    "UnboundedMarket", "apply_scenario", "build_graph", "clear", "clear_forced", "components",
    "compute_activating_bids", "compute_partial_bid", "diversion_rate", "dump_model",
    "enumerate_paths", "find_technology_cycles", "load_model", "verify_theorems",
]
