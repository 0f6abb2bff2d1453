"""Planning and simulation stack for tandem trolley transport by two nonholonomic robots."""

__version__ = "0.1.0"
