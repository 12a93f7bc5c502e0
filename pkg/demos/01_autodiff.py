#!/usr/bin/env python3
# A tour of the tensor engine: build a graph, backpropagate, verify a
# gradient numerically, and take optimizer steps.

import numpy as np

import chatgan as cg
from chatgan import tensor as T

# forward graph: loss = mean((tanh(x @ w) - y)^2)
rng = np.random.default_rng(0)
x = cg.Tensor(rng.normal(size=(4, 3)))
w = cg.Tensor(rng.normal(size=(3, 2)), requires_grad=True)
y = cg.Tensor(rng.normal(size=(4, 2)))

pred = T.tanh(T.matmul(x, w))
err = pred - y
loss = T.tmean(err * err)
print("loss:", loss.item())

cg.backward(loss)
print("dloss/dw:\n", w.grad)

# check one entry against central finite differences
h = 1e-4
w.data[0, 0] += h
hi = T.tmean((T.tanh(T.matmul(x, w)) - y) * (T.tanh(T.matmul(x, w)) - y)).item()
w.data[0, 0] -= 2 * h
lo = T.tmean((T.tanh(T.matmul(x, w)) - y) * (T.tanh(T.matmul(x, w)) - y)).item()
w.data[0, 0] += h
print("numeric dloss/dw[0,0]:", (hi - lo) / (2 * h), "analytic:", w.grad[0, 0])

# optimizers update in place from .grad; grads are cleared explicitly
params = {"w": w}
opt = cg.Adam(lr=0.05)
for step in range(25):
    cg.zero_grads(params)
    loss = T.tmean((T.tanh(T.matmul(x, w)) - y) * (T.tanh(T.matmul(x, w)) - y))
    cg.backward(loss)
    opt.step(params)
    if step % 5 == 0:
        print(f"step {step:2d}  loss {loss.item():.4f}")

# inference mode records no graph
with cg.no_grad():
    silent = T.matmul(x, w)
print("graph recorded under no_grad:", silent.requires_grad)
