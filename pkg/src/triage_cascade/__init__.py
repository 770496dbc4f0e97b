"""Two-stage triage cascade: a basic model, an advanced model, and a learned escalation gate."""

__version__ = "0.1.0"
