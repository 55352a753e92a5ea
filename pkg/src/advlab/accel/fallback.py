"""Pure-numpy backend: gradients come from the autodiff tape.

This is the reference path the jit kernels are checked against.
"""

import numpy as np

from .. import autodiff as ad
from ..models import forward_logits


def _grad_of(model, x, loss_from_logits):
    tape = ad.Tape()
    xt = tape.leaf(x)
    h = xt
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        h = ad.add_bias(ad.matmul(h, ad.tensor(w)), ad.tensor(b))
        if i < last:
            h = ad.relu(h)
    loss = loss_from_logits(h)
    (g,) = tape.gradients(loss, [xt])
    return loss.item(), g


class NumpyBackend:
    name = "numpy"

    def logits(self, model, x: np.ndarray) -> np.ndarray:
        return forward_logits(model.weights, model.biases, x)

    def ce_loss_grad(self, model, x: np.ndarray, cls: int):
        return _grad_of(model, x, lambda h: ad.cross_entropy_logits(h, cls))

    def margin_loss_grad(self, model, x: np.ndarray, cls: int, kappa: float, targeted: bool):
        return _grad_of(model, x, lambda h: ad.margin_loss(h, cls, kappa, targeted))
