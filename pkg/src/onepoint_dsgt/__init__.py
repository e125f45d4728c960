"""One-point DSGT.

Distributed stochastic gradient tracking driven by one-point zero-order
gradient estimates, with the analysis layer and experiment pipeline around it.
"""

__all__ = ["graph"]


def __getattr__(name: str):
    if name == "graph":
        from onepoint_dsgt.graph import graph

        return graph
    raise AttributeError(f"module 'onepoint_dsgt' has no attribute {name!r}")
