"""Exception hierarchy shared by the services and the CLI.

Each error knows the CLI exit code it maps to and renders itself as the
``{'status': 'error', ...}`` payload the command line prints on stderr.
"""
from typing import Any, Dict, Optional


class HedgingError(Exception):
    exit_code = 1
    kind = 'error'

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message

    def to_dict(self) -> Dict[str, Any]:
        return {'status': 'error', 'kind': self.kind, 'message': self.message, 'exit_code': self.exit_code}


class ConfigError(HedgingError):
    """Run configuration or command-line arguments are invalid."""
    exit_code = 2
    kind = 'config'

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(f'{field}: {message}' if field else message)
        self.field = field

    def to_dict(self) -> Dict[str, Any]:
        payload = super().to_dict()
        payload['field'] = self.field
        return payload


class DataError(HedgingError):
    """Input data is missing, malformed, or too small to fit."""
    exit_code = 3
    kind = 'data'


class NumericalError(HedgingError):
    """A numerical procedure did not converge."""
    exit_code = 4
    kind = 'numerical'


class NoCrossingError(NumericalError):
    """The profit difference keeps one sign over the whole search interval."""
    kind = 'no_crossing'
