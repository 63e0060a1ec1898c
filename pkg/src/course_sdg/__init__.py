"""Predict UN sustainable development goals for university course descriptions.

Stages: catalog ingest, cleaning, weak labelling, split, classifier
training, prediction and evaluation. See ``course_sdg.cli`` for the command
line entry point.
"""
__version__ = "0.1.0"
