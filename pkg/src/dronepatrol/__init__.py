"""Drone-swarm patrolling over uneven relevance maps with Double DQN."""

__version__ = "0.1.0"
