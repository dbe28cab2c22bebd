"""
Test suite package for ids-lab.

Subpackages:
    - unit: checks of single services against closed-form data
    - integration: whole scenarios and convergence studies written to disk

Modules:
    - conftest: Pytest configuration and shared grids, data sets and services
"""
