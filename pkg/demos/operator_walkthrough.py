"""A tour of the propagation operator on hypergraphs small enough to print.

Run with ``python demos/operator_walkthrough.py``.
"""

import numpy as np

from hyperprop import (Hypergraph, MaskedFeatures, direct_solve, dirichlet_energy, fp_reconstruct,
                       fuse, propagation_matrix, pseudo_label_values)

np.set_printoptions(precision=3, suppress=True)

# Five nodes, two overlapping hyperedges. Node 2 sits in both.
h = Hypergraph.from_members(5, [[0, 1, 2], [2, 3, 4]])
pm = propagation_matrix(h)
print("theta =\n", pm.theta.toarray())

# A signal that is constant on each hyperedge but jumps across node 2 has
# some energy; a smoother signal has less.
rough = np.array([1.0, 1.0, 1.0, -1.0, -1.0])
smooth = np.array([1.0, 1.0, 0.0, -1.0, -1.0])
print("energy rough  %.4f" % dirichlet_energy(pm, rough))
print("energy smooth %.4f" % dirichlet_energy(pm, smooth))

# Hide the middle three nodes and let propagation fill them in. The
# iteration settles on the same values as the closed-form solve.
x = np.array([[1.0], [0.0], [0.0], [0.0], [-1.0]])
known = np.array([[True], [False], [False], [False], [True]])
mf = MaskedFeatures.from_full(x, known)
for steps in (1, 5, 50, 500):
    print(f"{steps:>4} steps:", fp_reconstruct(pm, mf, steps).features.ravel())
print("direct:    ", direct_solve(pm, mf).ravel())

# Pseudo-labels reweight the same sparsity pattern. Say a classifier is
# sure that nodes 0 to 2 form one class and 3, 4 another: entries that
# cross the class boundary shrink to almost nothing, so node 2 now takes
# its value from its own side. The symmetric normalization weights nodes
# by the square root of their degree, which is why the well-connected
# node 2 lands a little above 1 rather than exactly on it.
probs = np.eye(2)[[0, 0, 0, 1, 1]]
fused = fuse(pm, pseudo_label_values(probs, pm.theta))
print("fused theta =\n", fused.theta.toarray())
print("fused fill-in:", fp_reconstruct(fused, mf, 2000).features.ravel())
