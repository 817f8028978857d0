"""Online learning with haphazard inputs: HapNet, HapNetPU and hedging baselines."""

__version__ = "0.1.0"
