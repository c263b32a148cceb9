"""Shipped scenario fixtures."""
