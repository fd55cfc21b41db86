"""Convert the Planetoid release of a citation network and run a small grid.

    python demos/planetoid_grid.py RAW_DIR NAME OUT_DIR

RAW_DIR holds the ``ind.<name>.*`` files of the Planetoid release (for
example Cora or Citeseer). The converted bundle lands in OUT_DIR/NAME and the
grid writes results.jsonl, summary.csv and timings.csv to OUT_DIR/results.
Set HYPERPROP_THREADS to run cells in parallel.
"""

import sys
from pathlib import Path

from hyperprop import ExperimentSpec, convert_planetoid, load_bundle, run_grid

raw, name, out = sys.argv[1], sys.argv[2], Path(sys.argv[3])
convert_planetoid(raw, name, out / name)
bundle = load_bundle(out / name, largest_component=True)
print(f"{name}: {bundle.graph.n_nodes} nodes, {bundle.graph.n_edges} edges, "
      f"{bundle.n_features} features, {bundle.n_classes} classes (largest component)")

spec = ExperimentSpec(str(out / name), missing_rates=[0.0, 0.5, 0.9, 0.99],
                      methods=["fp", "sghfp", "lp"], n_seeds=3)
_, summary = run_grid(spec, out / "results")
for row in summary:
    print(f"{row['method']:>6} rate={row['rate']:<5} acc={row['mean']:.4f}+-{row['std']:.4f} "
          f"drop={row['relative_drop']:.4f}")
