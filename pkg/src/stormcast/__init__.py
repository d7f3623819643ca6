"""Storm-severity forecasting from NOAA buoy and storm-event records."""

__version__ = "0.1.0"
