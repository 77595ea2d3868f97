"""A small ablation over the bridge variants.

Every variant is trained on the same rotated-clusters task for a few seeds and
the final target accuracies are averaged. Roughly half a minute.
"""

import math

from gvbridge import ABLATION_VARIANTS, SyntheticSpec, Task, TrainConfig, aggregate_seeds, generate, standardize, train
from gvbridge.stats import RunResult

SEEDS = (1, 2)
ITERS = 1500

runs = []
for seed in SEEDS:
    spec = SyntheticSpec(Task.Clusters, 3, 600, rotation=math.radians(40), seed=seed)
    source, target = standardize(*generate(spec))
    for variant in ("source-only", *ABLATION_VARIANTS):
        result = train(TrainConfig(variant=variant, total_iters=ITERS, eval_every=ITERS, seed=seed), source, target)
        runs.append(RunResult(variant, seed, result.records[-1].acc_target))
        print(f"seed {seed} {variant:<12} {result.records[-1].acc_target:.4f}")

# %%
print()
print(aggregate_seeds(runs).to_text(), end="")
