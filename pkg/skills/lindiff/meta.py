"""lindiff metadata."""

NAME = "lindiff"
VERSION = "0.1.0"
DESCRIPTION = "Closed-form theory of linear diffusion models at finite N, checked against Monte Carlo."
CSV_SCHEMA = "# lindiff-csv v1"
