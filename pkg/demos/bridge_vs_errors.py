"""Do misclassified target points carry larger bridges?

Trains the full method on rotated two-moons and sorts the target samples by
the size of their generator bridge output.
"""

import math

from gvbridge import SyntheticSpec, Task, TrainConfig, Variant, bridge_stats, evaluate, generate, standardize, train

spec = SyntheticSpec(Task.Moons, num_classes=2, samples_per_domain=600, rotation=math.radians(50),
                     noise_std=0.1, seed=3)
source, target = standardize(*generate(spec))

result = train(TrainConfig(variant="gvb-gd", total_iters=1500, eval_every=500, seed=3), source, target)
acc, samples = evaluate(result.model, target, Variant.from_name("gvb-gd"))
print(f"target accuracy {acc:.4f}\n")

# %%
# Ten equal-count buckets from the smallest to the largest bridge.
print(bridge_stats(samples).to_text(), end="")

# %%
# The discriminator bridge can be inspected the same way.
print()
print(bridge_stats(samples, key="sigma").to_text(), end="")
