from .app import create_app
from .store import LiveSession, SessionConfig, SessionStore

__all__ = ["create_app", "LiveSession", "SessionConfig", "SessionStore"]
