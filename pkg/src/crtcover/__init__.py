"""Random walks, local times and cover times on conditioned Galton-Watson
trees, with exact small-instance oracles and continuum (CRT) counterparts."""

__version__ = "0.1.0"
