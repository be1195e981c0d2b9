"""Convolutional ODE block: the conv is written as a Toeplitz matrix and reduced like any other."""

import numpy as np

import odec
from odec.bench import evaluate

rng = np.random.default_rng(1)
kernel = rng.standard_normal((2, 1, 3, 3))
M, _ = odec.conv_to_matrix(kernel, 5, 5)
print(f"a 2x1x3x3 kernel on 5x5 images becomes a {M.shape[0]}x{M.shape[1]} matrix")

shape = (1, 8, 8)
train = odec.synth_dataset(seed=1, classes=4, samples=400, shape=shape)
test = odec.synth_dataset(seed=1, classes=4, samples=200, shape=shape, split="test")
model = odec.conv_model(shape, 4, 4, seed=1)
model, _ = odec.fit(model, train, odec.TrainConfig(epochs=20, lr=0.2))
print(f"ODE state dimension n = {model.block.dim}")

snaps = odec.collect(model, train, 100)
base = evaluate(model, test, 0).top1
for k in (8, 32, 64):
    r = evaluate(odec.reduce_model(model, snaps, k), test, 0)
    print(f"k={k:>2}: top1 {r.top1:.3f} (original {base:.3f})")
