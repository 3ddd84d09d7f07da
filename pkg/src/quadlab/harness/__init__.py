"""Scenario generation, suite orchestration and reporting."""
