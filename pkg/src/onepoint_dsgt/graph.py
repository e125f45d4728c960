"""Define the experiment workflow graph."""

from langgraph.graph import END, START, StateGraph

from onepoint_dsgt.configuration import Configuration
from onepoint_dsgt.nodes.certifier import certify
from onepoint_dsgt.nodes.config_validator import validate_config
from onepoint_dsgt.nodes.network_builder import build_network
from onepoint_dsgt.nodes.objective_builder import build_objective
from onepoint_dsgt.nodes.summarizer import summarize
from onepoint_dsgt.runs_graph.conductor import conduct_runs
from onepoint_dsgt.state import ExperimentState, InputState, OutputState


def config_is_valid(state: ExperimentState) -> bool:
    """Determine whether the validated config allows the pipeline to continue."""
    return not state.errors and state.run_config is not None


def should_certify(state: ExperimentState) -> bool:
    """Certify one-point runs that finished without diverging."""
    if state.diverged or state.run_config is None:
        return False
    return state.run_config.algorithm.algorithm == "onepoint_dsgt"


builder = StateGraph(
    ExperimentState, input=InputState, output=OutputState, config_schema=Configuration
)

builder.add_node("validate_config", validate_config)
builder.add_node("build_network", build_network)
builder.add_node("build_objective", build_objective)
builder.add_node("conduct_runs", conduct_runs)
builder.add_node("summarize", summarize)
builder.add_node("certify", certify)

builder.add_edge(START, "validate_config")
builder.add_conditional_edges(
    "validate_config",
    config_is_valid,
    {
        True: "build_network",
        False: END,
    },
)
builder.add_edge("build_network", "build_objective")
builder.add_edge("build_objective", "conduct_runs")
builder.add_edge("conduct_runs", "summarize")
builder.add_conditional_edges(
    "summarize",
    should_certify,
    {
        True: "certify",
        False: END,
    },
)
builder.add_edge("certify", END)

graph = builder.compile()
graph.name = "One-Point DSGT Experiment"
