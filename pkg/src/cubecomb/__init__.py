"""Translation-independent subsets of finite Boolean cubes, with exact certificates."""

__version__ = "0.1.0"
