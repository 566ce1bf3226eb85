"""Flow-matching motion generation, editing by trajectory rewriting, and evaluation metrics."""
__version__ = "0.1.0"
