"""Memory-bounded hierarchical clustering with a random-walk feature pre-filter."""
from .birch import BirchConfig, ClusterModel, fit_predict
from .cf_tree import CFTree, ClusteringFeature, TreeParams
from .dataset import FeatureMatrix, SubsetKey, SyntheticSpec, generate_synthetic, normalize
from .metrics import PairConfusion, ScoreBundle, pair_confusion, score
from .pipeline import Comparison, compare, run_baseline, run_improved
from .random_walk import KeyPath, WalkConfig, extract_key_path, project_features, rw_descent

__version__ = "0.1.0"
