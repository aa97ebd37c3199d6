"""Service layer: FastAPI app plus the pydantic wire models."""

from .app import app

__all__ = ["app"]
