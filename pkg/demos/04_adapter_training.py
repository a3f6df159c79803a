"""
Routing per-type adapters through a frozen encoder
==================================================

Demonstrates the three properties the adapter design guarantees, then
fits the icon-counting toy task with a short training run.
"""

import numpy as np

from puzzlekit.encoder import (EncoderConfig, TrainConfig, backbone_forward,
                               count_trainable_params, forward, init_encoder,
                               make_counting_task, train)
from puzzlekit.rng import derive_seed
from puzzlekit.scene import make_icon_set

config = EncoderConfig()
enc = init_encoder(config, seed=0)

# Only adapters and the option head train; everything else is frozen
# backbone. The budget is tiny compared to the backbone itself.
n_train = count_trainable_params(config)
n_total = sum(v.size for v in enc.params.values())
print(f"trainable parameters: {n_train} of {n_total} "
      f"({100 * n_train / n_total:.1f}%)")

# Property 1: zero-initialized adapters are an exact no-op, so training
# starts from the frozen backbone's behavior, not a perturbed copy.
enc.params["head.w"] += 0.01  # give the zero-init head some weight
image = np.random.default_rng(0).random((64, 64, 1))
print("adapted == backbone at init:",
      bool(np.array_equal(forward(enc, image, "counting"),
                          backbone_forward(enc, image))))

# Property 2: each question type routes through its own adapter stack.
# Touching one type's weights cannot move any other type's output.
before = forward(enc, image, "algebra")
enc.params["layer0.adapter.up.w"][config.type_index("counting")] += 0.5
print("algebra output unchanged after editing the counting adapter:",
      bool(np.array_equal(forward(enc, image, "algebra"), before)))

# The toy task: scenes with 1..5 icons, label = count - 1. A short run
# is enough to see the loss fall well below chance (ln 5 ~ 1.609); the
# acceptance-scale run (2000 scenes, 2000 steps) reaches ~96% held-out.
lib = make_icon_set(5, seed=0)
dataset = make_counting_task(lib, 400, derive_seed(0, 0), config)
enc = init_encoder(config, derive_seed(0, 1))
tc = TrainConfig(lr=1e-2, steps=400, batch_size=32, seed=derive_seed(0, 2))
report = train(enc, dataset, tc)

print(f"\ninitial loss {report.initial_loss:.4f}, "
      f"final {report.losses[-1]:.4f}")
print(f"train accuracy {report.train_accuracy:.3f}, "
      f"validation {report.val_accuracy:.3f}")
print("backbone untouched:",
      report.checksum_before == report.checksum_after)
