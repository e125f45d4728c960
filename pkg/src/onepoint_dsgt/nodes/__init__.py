"""Nodes of the experiment pipeline."""

from onepoint_dsgt.nodes.certifier import certify
from onepoint_dsgt.nodes.config_validator import validate_config
from onepoint_dsgt.nodes.network_builder import build_network
from onepoint_dsgt.nodes.objective_builder import build_objective
from onepoint_dsgt.nodes.summarizer import summarize

__all__ = ["build_network", "build_objective", "certify", "summarize", "validate_config"]
