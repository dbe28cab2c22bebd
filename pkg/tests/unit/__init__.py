"""
Unit test package for individual services and models.
"""
