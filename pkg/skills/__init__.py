"""Skills package root."""
