"""Dense ODE classifier: train, snapshot, compress three ways, compare.

Run with ``python3 demos/dense_walkthrough.py``; takes a few seconds.
"""

import numpy as np

import odec
from odec.bench import evaluate, time_forward_many
from odec.snapshots import retained_energy
from odec import matcore

shape = (1, 8, 8)
train = odec.synth_dataset(seed=0, classes=6, samples=800, shape=shape)
test = odec.synth_dataset(seed=0, classes=6, samples=400, shape=shape, split="test")

# A random antisymmetric block followed by a trained softmax readout.
model = odec.dense_model(shape, 64, 6, seed=0)
model, history = odec.fit(model, train, odec.TrainConfig(epochs=10))
print(f"readout trained, final loss {history[-1]['loss']:.3f}")

snaps = odec.collect(model, train, 200, record_stride=2)
energy = retained_energy(matcore.svd(snaps.X).singular_values)
print("energy retained by the leading 8/16/32 modes:",
      [round(float(energy[k - 1]), 4) for k in (8, 16, 32)])

k = 16
variants = {
    "original": model,
    "pod-deim": odec.reduce_model(model, snaps, k, fold=True),
    "svd": odec.svd_compress(model, k),
    "apoz": odec.apoz_prune(model, odec.apoz_scores(model, train), k),
}
times = time_forward_many(list(variants.values()), test.images, reps=5)
for (name, m), t in zip(variants.items(), times):
    r = evaluate(m, test, 0)
    print(f"{name:>9}: top1 {r.top1:.3f}  top3 {r.top3:.3f}  {t * 1e3:6.2f} ms")

# Keeping every mode reproduces the original model.
full = odec.reduce_model(model, snaps, 64)
gap = np.max(np.abs(odec.predict(full, test.images) - odec.predict(model, test.images)))
print(f"k = n reproduces the original probabilities to {gap:.1e}")
