"""Missing node feature reconstruction by hypergraph feature propagation."""

from hyperprop.bench import (ExperimentSpec, accuracy, export_embeddings, label_propagation,
                             run_grid, silhouette_score)
from hyperprop.data import (DatasetBundle, Graph, LabeledSplits, MaskedFeatures, convert_npz,
                            convert_planetoid, generate_mask, load_bundle, make_splits, save_bundle,
                            sbm_generate)
from hyperprop.gcn import TrainConfig, normalize_adjacency, train_gcn
from hyperprop.hypergraph import (Hypergraph, PropagationMatrix, build_feature_hypergraph, fuse,
                                  propagation_matrix, pseudo_label_values)
from hyperprop.propagation import (SghfpConfig, dirichlet_energy, direct_solve, fp_baseline,
                                   fp_reconstruct, fp_step, sghfp_reconstruct)

__version__ = "0.1.0"
