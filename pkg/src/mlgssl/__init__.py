"""Multi-level graph contrastive learning with a self-weighted margin loss."""

__version__ = "0.1.0"

from .augment import AugConfig, GraphView, generate_views, identity_view
from .contrast import (LevelScores, MarginConfig, boundary_residual,
                       compute_scores, linear_multilevel_loss,
                       self_weighted_multilevel_loss, self_weights,
                       shifted_cosine, single_level_loss,
                       weighted_multilevel_loss)
from .encoder import (EncoderDims, EncoderParams, NonFiniteError, encode,
                      init_encoder, load_checkpoint, save_checkpoint)
from .graph import (BundleError, Graph, SbmConfig, generate_sbm, k_hop_set,
                    load_graph_bundle, make_graph, random_walk,
                    save_graph_bundle)
from .sampling import (LEVELS, ClusterAssignment, LevelSamples,
                       build_level_samples, kmeans)
from .trainer import (RunLog, TrainConfig, TrainResult, finite_diff_gradcheck,
                      level_gradient_cosine, train)
from .evaluation import (EvalConfig, clustering_eval, link_prediction,
                         make_link_split, node_classification, run_eval_suite)
