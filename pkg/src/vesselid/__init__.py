"""Maritime target-vessel identification, geolocation and mission toolkit."""

__version__ = "0.1.0"
