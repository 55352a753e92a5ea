"""Fused jit kernels for the attack inner loop.

Networks arrive packed: one flat float64 param vector plus the layer dims
(layer l holds W of dims[l] x dims[l+1] row-major, then its bias). Each
kernel runs one forward pass and, for the loss kernels, one input-gradient
backward pass, so an attack iteration is a single compiled call.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def mlp_logits(params, dims, x):
    nl = dims.size - 1
    a = x.copy()
    off = 0
    for l in range(nl):
        din = dims[l]
        dout = dims[l + 1]
        z = np.empty(dout)
        for j in range(dout):
            s = params[off + din * dout + j]
            for i in range(din):
                s += a[i] * params[off + i * dout + j]
            if l < nl - 1 and s < 0.0:
                s = 0.0
            z[j] = s
        off += din * dout + dout
        a = z
    return a


@njit(cache=True)
def _forward_acts(params, dims, x):
    # post-activation values per layer; (a > 0) recovers the relu mask,
    # matching the convention that the subgradient at exactly 0 is 0
    nl = dims.size - 1
    maxd = 0
    for i in range(dims.size):
        if dims[i] > maxd:
            maxd = dims[i]
    acts = np.zeros((nl + 1, maxd))
    offs = np.zeros(nl, np.int64)
    for i in range(dims[0]):
        acts[0, i] = x[i]
    off = 0
    for l in range(nl):
        offs[l] = off
        din = dims[l]
        dout = dims[l + 1]
        for j in range(dout):
            s = params[off + din * dout + j]
            for i in range(din):
                s += acts[l, i] * params[off + i * dout + j]
            if l < nl - 1 and s < 0.0:
                s = 0.0
            acts[l + 1, j] = s
        off += din * dout + dout
    return acts, offs


@njit(cache=True)
def _backprop_to_x(params, dims, acts, offs, dlogits):
    nl = dims.size - 1
    maxd = acts.shape[1]
    g = np.zeros(maxd)
    gnext = np.zeros(maxd)
    for j in range(dims[nl]):
        g[j] = dlogits[j]
    for l in range(nl - 1, -1, -1):
        din = dims[l]
        dout = dims[l + 1]
        off = offs[l]
        for i in range(din):
            s = 0.0
            for j in range(dout):
                s += g[j] * params[off + i * dout + j]
            gnext[i] = s
        if l > 0:
            for i in range(din):
                if acts[l, i] <= 0.0:
                    gnext[i] = 0.0
        tmp = g
        g = gnext
        gnext = tmp
    return g[:dims[0]].copy()


@njit(cache=True)
def ce_loss_grad_x(params, dims, x, cls):
    acts, offs = _forward_acts(params, dims, x)
    nl = dims.size - 1
    m = dims[nl]
    zmax = acts[nl, 0]
    for j in range(1, m):
        if acts[nl, j] > zmax:
            zmax = acts[nl, j]
    sexp = 0.0
    for j in range(m):
        sexp += math.exp(acts[nl, j] - zmax)
    loss = math.log(sexp) + zmax - acts[nl, cls]
    dlogits = np.empty(m)
    for j in range(m):
        dlogits[j] = math.exp(acts[nl, j] - zmax) / sexp
    dlogits[cls] -= 1.0
    return loss, _backprop_to_x(params, dims, acts, offs, dlogits)


@njit(cache=True)
def margin_loss_grad_x(params, dims, x, cls, kappa, targeted):
    acts, offs = _forward_acts(params, dims, x)
    nl = dims.size - 1
    m = dims[nl]
    runner = 0 if cls != 0 else 1
    best = acts[nl, runner]
    for j in range(m):
        if j != cls and acts[nl, j] > best:
            best = acts[nl, j]
            runner = j
    if targeted:
        margin = best - acts[nl, cls]
    else:
        margin = acts[nl, cls] - best
    loss = margin if margin > -kappa else -kappa
    dlogits = np.zeros(m)
    if margin >= -kappa:
        sign = 1.0 if targeted else -1.0
        dlogits[runner] = sign
        dlogits[cls] = -sign
    return loss, _backprop_to_x(params, dims, acts, offs, dlogits)
