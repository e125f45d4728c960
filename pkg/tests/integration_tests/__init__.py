"""Acceptance-scale tests of the experiment pipeline."""
