"""Non-equilibrium quantum Monte Carlo for stabilizer and related Renyi entropies."""
__version__ = "0.1.0"
