"""Joint topic modeling of user text, friendship links, and interest
labels: collapsed Gibbs training, parallel per-user prediction, friendship
topic-pair explanation, and an evaluation/visualization toolkit."""

from .corpus import Dataset, UserRecord, Vocabulary, load_dataset, save_dataset
from .errors import DataError, ModelError
from .model import (
    Checkpoint,
    CountCache,
    Hyperparams,
    LatentState,
    TopicParams,
    UserFeatures,
    compute_lambda0,
    recover_beta,
    recover_phi,
    theta_hat,
)
from .predictor import PredictConfig, assign_link_pairs, predict_all, predict_user
from .synthgen import GenSpec, enumerate_conditionals, generate_dataset
from .trainer import (
    GibbsTrainer,
    TrainConfig,
    joint_log_likelihood,
    maximize_nu_sigma,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "UserRecord",
    "Vocabulary",
    "load_dataset",
    "save_dataset",
    "DataError",
    "ModelError",
    "Checkpoint",
    "CountCache",
    "Hyperparams",
    "LatentState",
    "TopicParams",
    "UserFeatures",
    "compute_lambda0",
    "recover_beta",
    "recover_phi",
    "theta_hat",
    "PredictConfig",
    "assign_link_pairs",
    "predict_all",
    "predict_user",
    "GenSpec",
    "enumerate_conditionals",
    "generate_dataset",
    "GibbsTrainer",
    "TrainConfig",
    "joint_log_likelihood",
    "maximize_nu_sigma",
    "train",
]
