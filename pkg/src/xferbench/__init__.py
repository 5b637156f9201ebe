"""Transfer benchmark harness for single-channel sleep-stage classifiers."""
__version__ = "0.1.0"
