"""HTTP wire service hosting groups over the round protocol."""

from .core import GroupHost, ServiceError, ServiceRegistry
from .http import create_app

__all__ = ["GroupHost", "ServiceError", "ServiceRegistry", "create_app"]
