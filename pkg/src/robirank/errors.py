"""Exception types shared across the package."""


class ParseError(ValueError):
    """Malformed input line; carries the 1-based line number."""

    def __init__(self, line_number, message):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class DivergenceError(RuntimeError):
    """Optimization produced a non-finite value."""
