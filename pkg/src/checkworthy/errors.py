"""Exception hierarchy shared by every module.

Anything deriving from :class:`InputError` maps to CLI exit code 2,
:class:`ProviderError` to exit code 3.
"""


class CheckworthyError(Exception):
    pass


class InputError(CheckworthyError, ValueError):
    """Bad user input: malformed files, invalid configs, contract violations."""


class SchemaError(InputError):
    pass


class ValidationError(InputError):
    pass


class ParseError(InputError):
    pass


class ContractError(InputError):
    pass


class ConfigError(InputError):
    pass


class LeakageError(InputError):
    def __init__(self, offending):
        self.offending = list(offending)
        shown = ", ".join(self.offending[:20])
        more = "" if len(self.offending) <= 20 else f" (+{len(self.offending) - 20} more)"
        super().__init__(f"label leakage: augmented tweets derived from non-training tweets: {shown}{more}")


class TrainingError(CheckworthyError):
    pass


class ProviderError(CheckworthyError):
    """Translation provider unusable after retries."""
