"""Multi-robot, multi-scenario, multi-stage PPO training for mapless navigation."""

__version__ = "0.1.0"
