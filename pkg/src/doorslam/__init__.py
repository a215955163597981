"""Accelerometer-triggered door-slam detection: MFE features, tiny CNN, BLE-style event frames."""

__version__ = "0.1.0"
