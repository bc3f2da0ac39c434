"""Multi-robot search for a Markovian target on graphs: MILP models,
centralized and distributed planners, and a mission simulator."""

__version__ = "0.1.0"
