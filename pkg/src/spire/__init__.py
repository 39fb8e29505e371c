"""Single-point supervised small target detection by response-map regression."""

__version__ = "0.1.0"
