"""Floating-platform control: simulator, disturbances, LQR and PPO controllers, benchmarks."""

from .bench import BenchmarkTable, compile_metrics, run_benchmark, run_tracking
from .config import SuiteConfig
from .disturbances import DisturbanceProfile
from .dynamics import PlatformParams
from .env import PlatformEnv
from .lqr import LQRController, LqrWeights
from .ppo import PPOAgent, Policy, PpoConfig, RunningObsNormalizer, train
from .tracker import PathSpec, PurePursuitTracker

__version__ = "0.1.0"

__all__ = [
    "BenchmarkTable", "DisturbanceProfile", "LQRController", "LqrWeights", "PPOAgent", "PathSpec",
    "PlatformEnv", "PlatformParams", "Policy", "PpoConfig", "PurePursuitTracker", "RunningObsNormalizer",
    "SuiteConfig", "compile_metrics", "run_benchmark", "run_tracking", "train",
]
