"""Train a small estimation network for the LGCP and use it.

A desk-scale version of the full workflow: simulate labelled training
rows, train the convolutional network on (centered L-curve, count) inputs,
then estimate parameters for fresh patterns with a single forward pass and
compare against the minimum-contrast baseline.

Run:  python3 demos/02_train_and_estimate.py     (about a minute)
"""

import numpy as np

from ppp import (
    GrfParams,
    RunConfig,
    Window,
    estimate,
    evaluate_on_test,
    generate_training_data,
    minimum_contrast_lgcp,
    sample_lgcp,
    train_model,
)

w = Window.unit_square()
ranges = {"mu": (4.0, 6.0), "sigma2": (0.0, 4.0), "s": (0.001, 0.1)}

print("Generating 600 training + 100 test rows (LGCP, unit square)...")
cfg = RunConfig(
    model="lgcp", ranges=ranges, window=w, n_train=600, seed=11, s_levels=15,
)
train = generate_training_data(cfg)
test = generate_training_data(
    RunConfig(model="lgcp", ranges=ranges, window=w, n_train=100, seed=11,
              s_levels=15),
    offset=600,
)

print("Training for 10 epochs...")
tm = train_model(train, test, epochs=10, batch_size=50, seed=1)
for epoch, (tr, te) in enumerate(
    zip(tm.history["train_mse"], tm.history["test_mse"]), start=1
):
    print(f"  epoch {epoch:2d}: train MSE {tr:.3f}, test MSE {te:.3f}")

ev = evaluate_on_test(tm, test)
print("\nTest-set summary (600 rows is small; correlations improve with more):")
for j, name in enumerate(ev.param_names):
    print(f"  {name:>7}: rmse {ev.rmse[j]:.3f}, corr {ev.corr[j]:.3f}")

print("\nEstimating three fresh patterns, network vs minimum contrast:")
rng = np.random.default_rng(99)
for true in (GrfParams(5.0, 1.0, 0.05), GrfParams(4.5, 2.5, 0.02),
             GrfParams(5.5, 0.5, 0.08)):
    p = sample_lgcp(w, true, rng=rng)
    net = estimate(tm, p)
    mc = minimum_contrast_lgcp(p)
    print(f"  true (mu={true.mu}, sigma2={true.sigma2}, s={true.s}), n={p.n()}")
    print(f"    network : mu={net['mu']:.2f} sigma2={net['sigma2']:.2f} "
          f"s={net['s']:.3f}")
    print(f"    contrast: mu={mc.mu:.2f} sigma2={mc.sigma2:.2f} s={mc.s:.3f}")
