class InvalidArgument(ValueError):
    """Raised when an operation's preconditions are violated."""


class InvalidModel(ValueError):
    """Raised when a trained model cannot be used (empty, inconsistent, wrong kind)."""
