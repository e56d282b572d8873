"""RL agents behind one contract: ``act``, ``observe_trajectory``, ``learn``, ``save``/``load``."""

from ..core import ConfigError
from .base import Agent, OffPolicyAgent
from .ddpg import DdpgAgent
from .dqn import ActionDiscretizer, DqnAgent
from .her import HerConfig, relabel, relabel_transition
from .ppo import PpoAgent, clipped_surrogate, gae
from .sac import SacAgent

AGENTS = {cls.name: cls for cls in (SacAgent, DdpgAgent, DqnAgent, PpoAgent)}


def make_agent(agent_config: dict, env_spec, seed: int = 0, path: str = "agent_config") -> Agent:
    """Instantiate the agent named in ``agent_config['name']``."""
    if not isinstance(agent_config, dict):
        raise ConfigError(path, "must be a mapping")
    name = agent_config.get("name")
    if name not in AGENTS:
        raise ConfigError(f"{path}.name", f"unknown agent {name!r}; valid agents: {', '.join(AGENTS)}")
    return AGENTS[name](env_spec, agent_config, seed=seed, path=path)


__all__ = [
    "AGENTS", "ActionDiscretizer", "Agent", "DdpgAgent", "DqnAgent", "HerConfig", "OffPolicyAgent",
    "PpoAgent", "SacAgent", "clipped_surrogate", "gae", "make_agent", "relabel", "relabel_transition",
]
