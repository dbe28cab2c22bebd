"""
ids-lab: numerical laboratory for spacetime positive-mass rigidity.

This package checks initial data sets (M, g, k) on uniform Cartesian grids:
constraint quantities, ADM charges, spacetime harmonic functions and the
rigidity identities they give, Gaussian and Killing developments, and the
pp-wave curvature identities. Scenarios are described in TOML and driven from
the ``ids-lab`` command line, one resolution per run or as convergence studies.

Key Components:
    - cli: ``ids-lab run``, ``converge`` and ``export``
    - core: Configuration, exceptions, autodiff and the worker pool
    - models: Grids, fields, specs, reports and scenario schemas
    - services: Geometry, data sets and every check
"""
