"""riskscope: earnings-call risk exposure measurement and validation."""

__version__ = "0.1.0"
