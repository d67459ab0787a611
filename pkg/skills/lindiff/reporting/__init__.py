"""CSV table writers for lindiff runs."""
