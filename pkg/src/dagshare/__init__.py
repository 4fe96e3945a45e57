"""DAG-ledger knowledge sharing for connected vehicles, at desk scale.

Library layout:

- ``sites``: the site data model, canonical serialization, proof-of-work
  and the pluggable signature scheme.
- ``ledger``: the append-only DAG, style-aware tip selection, the
  random-walk baseline, verification and export/import.
- ``regions``: multi-region topology and the cross-region identity
  protocol built from zero-weight marker sites.
- ``learning``: the synthetic regression task, local SGD, upload gating
  and the freshness/style-weighted asynchronous aggregation.
- ``analysis``: closed-form oracles (convergence bound, stationarity
  cubic, real-root solver, tip-approval thinning).
- ``harness``: deterministic scenario runner and CSV emission.
- ``cli``: the ``dagshare`` command.
"""

__version__ = "0.1.0"
