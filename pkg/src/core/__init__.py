"""
Core package for shared configuration and utilities.

Modules:
    - config: Process-wide settings from IDSLAB_* environment variables
    - exceptions: Error hierarchy rooted at IdsLabError
    - autodiff: Hyper-dual numbers for exact oracle derivatives
    - concurrency: Order-preserving thread pool
"""
