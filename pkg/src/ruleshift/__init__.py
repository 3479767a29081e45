"""Rule-shift generalization probes.

Two environments with verifier feedback (an arithmetic card game and a
grid-city navigation task), a sequential-revision episode loop, a tiny
trainable policy with SFT and PPO trainers, metrics and compute accounting,
and a line protocol serving it all to external agents.
"""

from .gp_env import GeneralPointsEnv, RuleConfig
from .nav_env import NavEnvConfig, NavigationEnv
from .revision import Transcript, build_prompt, run_episode

__version__ = "0.1.0"

__all__ = [
    "GeneralPointsEnv",
    "RuleConfig",
    "NavEnvConfig",
    "NavigationEnv",
    "Transcript",
    "build_prompt",
    "run_episode",
    "__version__",
]
