"""cubelet: hierarchical-cube CFD with immersed boundaries, Lagrangian
droplet transport and airborne-infection risk reporting."""

__version__ = "0.1.0"
