"""Layers, the LeNet-5 assembly, gradient checking and checkpoints."""
from . import kernels
from .gradcheck import GradCheckReport, gradient_check, relative_error
from .layers import (
    Conv2D, Linear, MaxPool2D, ReLU, SoftmaxCrossEntropy,
    conv_backward, conv_forward, fc_forward, maxpool_forward, relu, softmax, softmax_xent,
)
from . import checkpoint
from .network import LayerSpec, Network, NetworkConfig, build_network, lenet5, small_lenet
