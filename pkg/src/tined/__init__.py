"""GNN-to-MLP distillation with teacher injection and Dirichlet-energy ratio matching."""

__version__ = "0.1.0"
