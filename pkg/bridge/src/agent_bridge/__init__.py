"""Pure client relaying chat-completion model APIs onto the environment
line protocol. All grading and episode state stay server-side."""

from .config import BridgeConfig, BridgeConfigError, load_bridge_config
from .endpoint import ChatEndpoint, EndpointError, HttpChatEndpoint
from .protocol import ProtocolError, Reply, ServerConnection
from .runner import (
    complete_with_retries,
    episode_seeds,
    run_agent,
    run_episode,
    write_log,
)

__all__ = [
    "BridgeConfig",
    "BridgeConfigError",
    "ChatEndpoint",
    "EndpointError",
    "HttpChatEndpoint",
    "ProtocolError",
    "Reply",
    "ServerConnection",
    "complete_with_retries",
    "episode_seeds",
    "load_bridge_config",
    "run_agent",
    "run_episode",
    "write_log",
]
