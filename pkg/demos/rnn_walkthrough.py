"""Recurrent ODE reading an image row by row, reduced with oversampled DEIM."""

import odec
from odec.bench import evaluate
from odec.ode import count_activations

shape = (1, 6, 6)
train = odec.synth_dataset(seed=2, classes=3, samples=300, shape=shape)
test = odec.synth_dataset(seed=2, classes=3, samples=150, shape=shape, split="test")
model = odec.rnn_model(40, 3, input_dim=6, seed=2)
model, _ = odec.fit(model, train, odec.TrainConfig(epochs=20, lr=0.2))
snaps = odec.collect(model, train, 100)
print(f"{snaps.count} snapshot columns of dimension {snaps.n}")

base = evaluate(model, test, 0).top1
for k, o in ((4, 0), (4, 2), (10, 0), (20, 0)):
    red = odec.reduce_model(model, snaps, k, o=o)
    with count_activations() as c:
        red.block.rhs(snaps.X[:k, 0] * 0.0)
    r = evaluate(red, test, 0)
    print(f"k={k} o={o}: {c.evaluations} activations per step, top1 {r.top1:.3f} (original {base:.3f})")
