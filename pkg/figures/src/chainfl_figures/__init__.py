"""Figure generation from simulation sweep artifacts.

Reads a sweep's index.csv and per-run blocks.csv files (plain CSV, produced
by the simulator package) and renders the four figure styles as
deterministic SVG images, each accompanied by a CSV table of exactly the
plotted numbers.
"""

__version__ = "0.1.0"
