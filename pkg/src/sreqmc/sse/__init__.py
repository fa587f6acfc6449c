"""Replicated SSE sampler for the transverse-field Ising model."""
from .engine import (ReplicaConfig, audit, cluster_update, config_sweeps, diagonal_update, equilibrate,
                     init_config, load_checkpoint, log_weight, measure_energy, save_checkpoint)

__all__ = ["ReplicaConfig", "audit", "cluster_update", "config_sweeps", "diagonal_update", "equilibrate",
           "init_config", "load_checkpoint", "log_weight", "measure_energy", "save_checkpoint"]
