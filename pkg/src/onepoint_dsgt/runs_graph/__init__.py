"""Monte-Carlo repetition package."""

from .conductor import conduct_runs

__all__ = ["conduct_runs"]
