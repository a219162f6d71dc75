"""HTTP model service: /embed, /read, /healthz."""

from .app import ServiceSettings, create_app

__version__ = "0.1.0"

