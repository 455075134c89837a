# relaytherm/routers/health.py
from fastapi import APIRouter

from .. import __version__, schemas
from ..config import get_settings

router = APIRouter(
    prefix="/health",
    tags=["Health Checks"],
    responses={404: {"description": "Not found"}},
)


@router.get("", response_model=schemas.HealthResponse)
def read_health() -> schemas.HealthResponse:
    return schemas.HealthResponse(status="ok", version=__version__, environment=get_settings().environment)
