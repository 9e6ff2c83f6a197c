"""Urban RTK positioning engine, tracking-loop simulator and synthetic drive generator."""

__version__ = "0.1.0"
