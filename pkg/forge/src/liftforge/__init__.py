"""liftforge: trains and exports the TMLF models the tinylift engine runs."""

__version__ = "0.1.0"
