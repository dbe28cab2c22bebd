"""Command-line surface of ids-lab."""
