"""
Integration test package for scenario runs.

These tests run complete scenarios through ScenarioService and the CLI,
including report files and convergence tables.
"""
