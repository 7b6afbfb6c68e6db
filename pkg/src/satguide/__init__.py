"""Neural-guided saturation theorem-proving workbench.

A small first-order refutation prover whose clause selection is delegated to
a trainable attention policy over vectorized proof states, plus the training
loop, benchmark harness, and external-reasoner guidance protocol.
"""

__version__ = "0.1.0"
