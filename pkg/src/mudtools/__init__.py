"""Generate and verify MUD profiles for IoT devices."""

__version__ = "0.1.0"
