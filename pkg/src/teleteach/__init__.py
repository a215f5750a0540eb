"""Tele-teaching simulation: bilateral teleoperation of two Cartesian robots,
online periodic-skill learning on R^3 x S^3, and two-level autonomy handover."""

__version__ = "0.1.0"
