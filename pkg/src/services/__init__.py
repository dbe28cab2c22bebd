"""
Numerical services package.

Services:
    - geometry_service: Finite-difference tensor calculus, sphere quadrature, decay fits
    - ids_service: Constraint quantities mu, J and the DEC margin
    - oracle_service: Closed-form flat, graph, Schwarzschild and pp-wave data
    - adm_service: ADM energy and momentum with radius extrapolation
    - harmonic_service: Spacetime harmonic solver and the mass inequality
    - rigidity_service: Adapted frames, level sets, A-tensor, Gauss-Codazzi
    - gaussian_dev_service: Gaussian development and its flatness
    - killing_dev_service: Killing development and pp-wave identities
    - field_io_service: Binary field and IDS containers
    - scenario_service: Scenario runner and convergence studies
"""
