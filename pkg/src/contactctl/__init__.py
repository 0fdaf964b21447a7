"""contactctl: two-level contact-implicit manipulation control stack.

High level: receding-horizon reference generation by box-constrained iLQR
over barrier-smoothed quasi-dynamic contact dynamics. Low level: a
compliance-based contact controller tracking joint and force references.
Validation: a second-order penalty-contact simulator plus experiment
drivers and metrics.
"""

__version__ = "0.1.0"
