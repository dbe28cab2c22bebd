"""
Data models and schemas package.

Grids and tensor fields are plain numpy containers with validated layout;
specifications, reports and scenario files are Pydantic models so that they
validate on load and serialize into the report files unchanged.
"""
