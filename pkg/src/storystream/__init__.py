"""Online multilingual news-stream clustering with linear rank/accept/merge models."""

from .domain import (
    Cluster,
    DocRepr,
    DocumentInput,
    LinearModel,
    centroid_update,
    day_from_epoch,
    day_from_instant,
    dense_vec,
)
from .engine import AssignmentRecord, ClusteringEngine, EngineConfig
from .evaluation import EvalReport, GoldStandard, bcubed, evaluate, same_story, standard_f1
from .features import (
    SizeLimits,
    TemporalParams,
    cluster_pair_features,
    cosine,
    doc_cluster_features,
    size_score,
    temporal_score,
)
from .models import (
    LabeledExample,
    RankPair,
    TrainConfig,
    load_model,
    save_model,
    score,
    train_binary,
    train_rank,
)
from .pool import ClusterPool, PoolConfig
from .synth import SynthCorpus, synth_corpus
from .trainer import MergeSample, TrainedModels, train_all

__version__ = "0.1.0"
