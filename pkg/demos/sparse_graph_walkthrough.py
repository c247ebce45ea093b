"""Dense models for sparse graphs, and what happens when the graph hides a dense piece.

    python demos/sparse_graph_walkthrough.py
"""
import numpy as np

from hugeobj.distinguishers import gap_report, random_cuts
from hugeobj.generators import adjacency, generate
from hugeobj.graph_learners import (NoDenseModelError, SparseReductionParams,
                                    learn_sparse_dense_model, no_dense_model_witness,
                                    upper_uniform_check)
from hugeobj.objects import AccessView

rng = np.random.default_rng(0)
params = SparseReductionParams(gamma=4, eta=1 / 32, eps=0.1, eps_prime=0.05)

sparse = generate("sparse-random", {"N": 512, "avg_degree": 16}, rng)
cuts = random_cuts(sparse.vertices, 8, seed=3)
model = learn_sparse_dense_model(AccessView(sparse, "support"), params, cuts, rng=rng)
rep = gap_report(cuts, AccessView(sparse, "support"), model, 10_000, 0.05, rng)
print(f"sparse target: model of density {params.alpha}, max cut gap {rep.max_gap:.4f}")

planted = generate("planted-dense", {"N": 512, "avg_degree": 16, "clique": 24}, rng)
A = adjacency(planted)
verdict = upper_uniform_check(A, params.eta, params.gamma, "sampled", trials=400, rng=rng)
print(f"planted target: worst density ratio {verdict.worst_ratio:.1f} (allowed {params.gamma})")
U, V = verdict.witness
print("no dense model can exist:",
      no_dense_model_witness(A, U, V, params.gamma, 0.001, min(U.size, V.size) / 512))
try:
    learn_sparse_dense_model(AccessView(planted, "support"), params, cuts, rng=rng, max_updates=400)
    print("learner still returned a model: the cut class is too coarse to see the clique")
except NoDenseModelError as exc:
    print("learner gave up:", exc)
