"""Fruit-phenotyping analytics: detection evaluation, trait extraction and reports."""

__version__ = "0.1.0"
