from .app import app, create_app
from .schemas import StageRequest, StageResponse

__all__ = ["app", "create_app", "StageRequest", "StageResponse"]
