"""Per-country dynamic elastic net forecasting of conflict-fatality change."""

__version__ = "0.1.0"
