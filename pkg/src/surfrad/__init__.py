"""Joint neural surface and radiance fields from sparse calibrated views.

A single embedding feeds both an occupancy-style surface field and a
density/color radiance field.  Both are conditioned on pixel-aligned image
features fused across views with a small transformer, and rendering
concentrates radiance samples in a thin shell around the predicted surface.
"""

from .config import RunConfig
from .fields import JointField, ModelConfig, SceneContext
from .losses import LossConfig
from .rendering import RenderConfig
from .training import TrainState, finetune, make_state, pretrain

__version__ = "0.1.0"

__all__ = [
    "JointField",
    "LossConfig",
    "ModelConfig",
    "RenderConfig",
    "RunConfig",
    "SceneContext",
    "TrainState",
    "finetune",
    "make_state",
    "pretrain",
    "__version__",
]
