"""Numerical laboratory for elliptic homogenization.

Cell problems and window (representative-volume) estimators for periodic,
almost-periodic, random, and perforated coefficient fields, plus stability
experiments that compare homogenized limits against closeness-in-mean
statistics. See the README for the CLI entry points.
"""

__version__ = "0.1.0"
