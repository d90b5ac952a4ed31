"""Long-term single-object tracking as one-shot detection plus association.

Template information enters an anchor-free detection head through
dynamically generated 1x1 convolutions; an explicit multi-object association
layer (re-id embedding, IoU, Kalman motion, Hungarian matching) keeps the
target apart from similar distractors.
"""
from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
