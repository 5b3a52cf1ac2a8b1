"""Crouzeix-Raviart eigenvalue laboratory."""
