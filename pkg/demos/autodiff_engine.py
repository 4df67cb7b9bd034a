"""
The autodiff engine: tensors, 1-D convolution, backprop
=======================================================

tadkit trains its detector with a deliberately small reverse-mode autodiff
engine.  A Tensor wraps a float64 numpy array, remembers its parents, and
every operation installs a closure that propagates gradients backward.
"""

import numpy as np

from tadkit import Parameter, Tensor, conv1d, maxpool1d, relu
from tadkit.gradcheck import check_gradients
from tadkit.tensor import square, tmean

# A tensor is just data plus room for a gradient.  Calling backward() on a
# scalar walks the graph in reverse topological order.
x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
y = tmean(square(x))
y.backward()
print("d mean(x^2) / dx =", x.grad)          # 2x / 3

# The workhorse op is a 1-D convolution over a (T, C) sequence.  Same
# padding keeps ceil(T / stride) steps, exactly like the usual framework
# behaviour, so a stride-1 kernel never shortens the sequence.
signal = Tensor(np.linspace(0.0, 1.0, 12).reshape(6, 2))
kernel = Parameter(np.random.default_rng(0).normal(size=(3, 2, 4)), "kernel")
bias = Parameter(np.zeros(4), "bias")
feature_map = relu(conv1d(signal, kernel, bias, stride=1))
print("conv output shape:", feature_map.data.shape)  # (6, 4)

# Max pooling halves the temporal axis; ties go to the earliest maximum so
# the backward pass has a single well-defined winner per window.
pooled = maxpool1d(feature_map, window=2, stride=2)
print("pooled shape:   ", pooled.data.shape)          # (3, 4)

# Gradients are trusted because they are checked, not because they look
# plausible.  check_gradients perturbs every parameter coordinate with
# central finite differences and reports the worst relative error.


def loss_fn():
    return tmean(square(maxpool1d(relu(conv1d(signal, kernel, bias)), 2, 2)))


result = check_gradients(loss_fn, [kernel, bias], step=1e-6)
print(f"max relative error across {kernel.data.size + bias.data.size} "
      f"coordinates: {result.max_rel_error:.3e}")
