"""Deterministic simulator and decentralized controller library for
multi-UAV slung-load transport under abrupt cable severance."""

__version__ = "0.1.0"

from .params import (ControllerParams, DrydenParams, L1Params, MpcParams,
                     ReshapeParams, RunConfig, SimParams)

__all__ = [
    "ControllerParams", "DrydenParams", "L1Params", "MpcParams",
    "ReshapeParams", "RunConfig", "SimParams",
]
