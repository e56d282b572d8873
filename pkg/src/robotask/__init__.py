"""Robot x task reinforcement-learning toolkit."""
