"""Democratic co-salient feature mining on a numpy autodiff core.

The package detects objects that recur across a group of related images.
A shared encoder extracts per-image features; a mining stage elects one
seed pixel per image by group-wide consensus and turns the seeds into
response maps and a group prototype; an attention stage re-weights
feature interactions by their rank so that widely supported pixels
dominate; a decoder upsamples back to a full-resolution saliency map.
Training pairs a soft-overlap loss with a masked self-contrast term.
"""

from .model import CoSalModel, DecisionCache, ForwardResult, ModelConfig
from .tensor import ShapeError, Tensor

__version__ = "0.1.0"

__all__ = [
    "CoSalModel",
    "DecisionCache",
    "ForwardResult",
    "ModelConfig",
    "ShapeError",
    "Tensor",
    "__version__",
]
