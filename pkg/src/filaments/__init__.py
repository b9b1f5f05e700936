"""Standing waves of near-parallel vortex filaments: spectral Galerkin workbench."""

__version__ = "0.1.0"
