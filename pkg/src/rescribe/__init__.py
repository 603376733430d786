"""rescribe: reconstruct RE work sessions from activity logs and annotate them."""

__version__ = "0.1.0"
