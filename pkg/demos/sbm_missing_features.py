"""Plain feature propagation against the pseudo-label guided loop on a
synthetic stochastic block model with 90% of feature entries hidden.

Run with ``python demos/sbm_missing_features.py [n_seeds]``. Each seed takes
a few seconds.
"""

import sys

import numpy as np

from hyperprop import (MaskedFeatures, SghfpConfig, TrainConfig, fp_baseline, generate_mask,
                       make_splits, normalize_adjacency, sbm_generate, sghfp_reconstruct,
                       silhouette_score, train_gcn)
from hyperprop.gcn import hidden_embedding

n_seeds = int(sys.argv[1]) if len(sys.argv) > 1 else 3
rows = []
for s in range(n_seeds):
    # Four communities of 150 nodes; features are noisy class means.
    bundle = sbm_generate([150] * 4, 0.03, 0.008, 300, 0.5, seed=1000 + s)
    splits = make_splits(bundle.labels, 20, 200, seed=s)
    known = generate_mask(*bundle.features.shape, 0.9, "uniform-entry", seed=s)
    mf = MaskedFeatures.from_full(bundle.features, known)
    a_hat = normalize_adjacency(bundle.graph)

    recon = {
        "zeros": mf.features,
        "fp": fp_baseline(bundle.graph, mf).features,
        "sghfp": sghfp_reconstruct(bundle, mf, splits, SghfpConfig(seed=s))[0].features,
    }
    row = {}
    for name, x in recon.items():
        # The same downstream classifier and seed for every reconstruction.
        trained = train_gcn(a_hat, x, bundle.labels, splits, TrainConfig(seed=s))
        acc = np.mean(trained.predict()[splits.test] == bundle.labels[splits.test])
        sil = silhouette_score(hidden_embedding(trained.params, a_hat, x), bundle.labels)
        row[name] = (acc, sil)
    rows.append(row)
    print(f"seed {s}: " + "  ".join(f"{k} acc={a:.3f} sil={b:.3f}" for k, (a, b) in row.items()))

print("\nmean over seeds")
for name in rows[0]:
    acc = np.mean([r[name][0] for r in rows])
    sil = np.mean([r[name][1] for r in rows])
    print(f"  {name:>6}: accuracy {acc:.4f}, silhouette {sil:.4f}")
