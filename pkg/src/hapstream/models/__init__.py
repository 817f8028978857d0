from .base import OnlineModel, ReplayBuffer
from .hapnet import HapNet, HapNetConfig
from .hapnetpu import HapNetPU, HapNetPUConfig
from .hedge import HedgeConfig, HedgeMLP, WeightedResidual, project_floor_simplex

MODELS = ("hapnet", "hapnetpu", "hedge", "weighted_residual")

__all__ = ["OnlineModel", "ReplayBuffer", "HapNet", "HapNetConfig", "HapNetPU",
           "HapNetPUConfig", "HedgeConfig", "HedgeMLP", "WeightedResidual",
           "project_floor_simplex", "MODELS"]
