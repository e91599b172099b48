"""Voice-controllable graph-to-text generation from Discourse Representation Graphs."""

__version__ = "0.1.0"
