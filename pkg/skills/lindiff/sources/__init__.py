"""Data-matrix IO."""
