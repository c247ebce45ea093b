"""Learn a model of a sparse binary function whose every sample has exactly k ones.

    python demos/fixed_weight_walkthrough.py
"""
import numpy as np

from hugeobj.auditors import AuditorParams, audit_sample_access
from hugeobj.distinguishers import gap_report, random_sets
from hugeobj.fixed_weight import learn_fixed_weight
from hugeobj.generators import generate
from hugeobj.objects import AccessView, to_ordinary

rng = np.random.default_rng(0)
f = generate("random-support-k", {"n": 10, "k": 128, "bias": 1.0}, rng)
tests = random_sets(f.domain, 8, seed=1)
params = AuditorParams(eps=0.1, gamma=0.05, delta=0.05)

model = learn_fixed_weight(AccessView(f, "sample"), 128, audit_sample_access, tests, params, rng)
tree = model.sampler.tree
print(f"budget tree: {1 << tree.depth} leaves of {tree.N >> tree.depth} points, m={tree.m}")

# every object drawn from the model has exactly k ones
weights = {int(model.sampler.materialize(model.new_oracle(rng)).sum()) for _ in range(20)}
print("weights over 20 objects:", sorted(weights))

# and no test in the class tells it apart from the target
report = gap_report(tests, AccessView(f, "sample"), model, 20_000, 0.05, rng)
print(report.to_csv())

# the same model from a 16-byte seed: one seed, one object
short = to_ordinary(model, 128)
seed = b"demo-seed-bytes!"
a, b = short.bind(seed).table(), short.bind(seed).table()
print("ordinary form:", int(a.sum()), "ones; same seed gives same object:", np.array_equal(a, b))
