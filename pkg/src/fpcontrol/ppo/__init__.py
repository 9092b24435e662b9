from .algorithm import ActorCritic, Adam, PpoConfig, forward_actor, gae, log_prob, loss_and_grads, ppo_loss, ppo_update
from .network import MLP, sigmoid
from .normalization import RunningObsNormalizer, RunningScalar, merge_moments
from .trainer import PPOAgent, Policy, TrainingError, train

__all__ = [
    "ActorCritic", "Adam", "MLP", "PPOAgent", "Policy", "PpoConfig", "RunningObsNormalizer",
    "RunningScalar", "TrainingError", "forward_actor", "gae", "log_prob", "loss_and_grads", "ppo_loss",
    "merge_moments", "ppo_update", "sigmoid", "train",
]
