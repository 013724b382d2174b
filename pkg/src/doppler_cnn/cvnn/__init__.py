"""Complex-valued and baseline network kernels with hand-written backward passes."""

from .functional import (
    aps_forward,
    aps_backward,
    aps_norms,
    conv1d_forward,
    conv1d_backward,
    gap_forward,
    gap_backward,
    linear_forward,
    linear_backward,
    magnitude_forward,
    magnitude_backward,
    maxpool_forward,
    maxpool_backward,
    relu_forward,
    relu_backward,
)
from .layers import (
    APSPool,
    BatchNorm1d,
    ComplexConv1d,
    ComplexLinear,
    Conv1d,
    Dropout,
    Flatten,
    GlobalAvgPool,
    Layer,
    Linear,
    Magnitude,
    MaxPool1d,
    ReLU,
    Sequential,
)
from .optim import Adam, softmax, softmax_cross_entropy
