"""Scenario configuration, execution, calibration and result emission."""
