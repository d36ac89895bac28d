"""Constructive chain recurrence, periodic approximation and physical-like measure estimation."""
