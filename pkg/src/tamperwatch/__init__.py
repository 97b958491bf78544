"""Surveillance-camera tamper detection with ConvLSTM reconstruction models."""

__version__ = "0.1.0"
