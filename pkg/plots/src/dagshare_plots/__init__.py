"""Figure analogs for dagshare simulation output.

Input is a run directory written by ``dagshare sim`` (a ``manifest.json``
plus one CSV per metric family); output is one figure per scenario, or, in
dry-run mode, the exact data table the figure would plot.
"""

__version__ = "0.1.0"
