"""Fit a partition-aware d-regular model to a block graph and sample simple graphs from it.

    python demos/regular_graph_walkthrough.py
"""
import numpy as np

from hugeobj.distinguishers import gap_report, partition_cells
from hugeobj.generators import generate
from hugeobj.objects import AccessView
from hugeobj.regular_graphs import Partition, degree_audit, learn_uniform_degree, uniform_degree_impl

rng = np.random.default_rng(0)
g = generate("block-regular", {"N": 600, "t": 3, "d_in": 2, "d_cross": 2}, rng)
part = Partition(g.labels)

fit = learn_uniform_degree(AccessView(g, "support"), part, d=6, eps=0.05, delta=0.05, rng=rng,
                           samples=30_000)
print("port table:\n", fit.table.K)
print("residuals before repair:", fit.initial_residuals, "transfers:", fit.transfers)

model = uniform_degree_impl(part, fit.table, 6)
for _ in range(3):
    nbrs = model.neighbors(model.new_oracle(rng))
    print("sampled graph:", degree_audit(nbrs))

# one vertex's neighborhood, answered lazily without building the graph
oracle = model.new_oracle(rng)
v, back = model.endpoint(oracle, np.full(6, 17), np.arange(6))
print("neighbors of 17:", v.tolist(), "via ports", back.tolist())

report = gap_report(partition_cells(part), AccessView(g, "support"), model, 10_000, 0.05, rng)
print(f"max cell gap {report.max_gap:.4f} (radius {report.radius:.4f})")
