"""Warm-started grasp learning with coarse affordance-map pretraining."""

__version__ = "0.1.0"
